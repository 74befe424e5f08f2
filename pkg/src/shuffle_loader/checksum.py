"""Chunk payload checksums.

Two 64-bit algorithms are registered. FNV-1a is the default and is what the
format reference documents; BLAKE2b truncated to 8 bytes runs at C speed and is
meant for multi-GiB files. The algorithm is recorded per file in the schema block.
"""

import enum
import hashlib
from typing import Callable, Dict

FNV64_OFFSET_BASIS = 0xCBF29CE484222325
FNV64_PRIME = 0x100000001B3
MASK64 = 0xFFFFFFFFFFFFFFFF


def fnv1a64(data: bytes) -> int:
    """Return the 64-bit FNV-1a hash of `data`."""
    h = FNV64_OFFSET_BASIS
    for byte in data:
        h = ((h ^ byte) * FNV64_PRIME) & MASK64
    return h


def blake2b64(data: bytes) -> int:
    """Return BLAKE2b with an 8-byte digest, read as a little-endian integer."""
    return int.from_bytes(hashlib.blake2b(data, digest_size=8).digest(), "little")


class ChecksumKind(enum.IntEnum):
    """Checksum algorithm identifier as stored in the schema block."""

    FNV1A_64 = 0
    BLAKE2B_64 = 1

    @classmethod
    def from_string(cls, value: str) -> "ChecksumKind":
        """Parse `fnv1a64` / `blake2b64` (case-insensitive, dashes allowed)."""
        normalized = value.strip().lower().replace("-", "").replace("_", "")
        for kind, name in _NAMES.items():
            if normalized == name:
                return kind
        raise ValueError(
            f"{value!r} is not a checksum algorithm. "
            f"Accepted: {', '.join(sorted(_NAMES.values()))}"
        )

    @property
    def label(self) -> str:
        """The name used on the command line and in settings."""
        return _NAMES[self]

    def compute(self, data: bytes) -> int:
        """Checksum `data` with this algorithm."""
        return _FUNCTIONS[self](data)


_NAMES: Dict[ChecksumKind, str] = {
    ChecksumKind.FNV1A_64: "fnv1a64",
    ChecksumKind.BLAKE2B_64: "blake2b64",
}

_FUNCTIONS: Dict[ChecksumKind, Callable[[bytes], int]] = {
    ChecksumKind.FNV1A_64: fnv1a64,
    ChecksumKind.BLAKE2B_64: blake2b64,
}
