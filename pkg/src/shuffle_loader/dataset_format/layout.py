"""Byte layout and domain types of the two dataset container formats.

All integers are little-endian.

    header   = magic "SHFD" | u16 version | schema block
    schema   = u8 encoding | u8 checksum kind | u32 fixed_sample_bytes
               | u32 samples_per_chunk | u64 total_samples | u64 total_chunks
    record   = u32 payload length | u64 checksum | payload
    end      = record with length 0 and checksum 0
    footer   = index entries | u64 footer length | magic "DFHS"   (indexable only)
    entry    = u64 chunk_ordinal | u64 byte_offset | u32 byte_length
               | u32 sample_count | u64 first_global_index | u64 checksum

A stream file is header, records, end marker. An indexable file is the same
followed by the footer. `byte_offset`/`byte_length` of an entry cover the whole
chunk record, header included.
"""

import bisect
import enum
import math
import struct
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

from ..checksum import ChecksumKind
from ..errors import ManifestInvariantError, SampleSizeError

MAGIC = b"SHFD"
TRAILING_MAGIC = b"DFHS"
FORMAT_VERSION = 1

PREAMBLE = struct.Struct("<4sH")
SCHEMA = struct.Struct("<BBIIQQ")
HEADER_SIZE = PREAMBLE.size + SCHEMA.size
RECORD_HEADER = struct.Struct("<IQ")
INDEX_ENTRY = struct.Struct("<QQIIQQ")
TRAILER = struct.Struct("<Q4s")
SAMPLE_LENGTH = struct.Struct("<I")

MAX_CHUNK_PAYLOAD = 0xFFFFFFFF
DEFAULT_CHUNK_BYTES = 64 * 1024 * 1024
DEFAULT_VARIABLE_SAMPLES_PER_CHUNK = 4096


class SampleEncoding(enum.IntEnum):
    """How samples are laid out inside a chunk payload."""

    FIXED_SIZE = 0
    LENGTH_PREFIXED = 1

    @classmethod
    def from_string(cls, value: str) -> "SampleEncoding":
        """Parse `fixed-size` / `length-prefixed`."""
        return cls[value.strip().upper().replace("-", "_")]

    @property
    def label(self) -> str:
        """Command line spelling."""
        return self.name.lower().replace("_", "-")


@dataclass(frozen=True)
class SchemaDescriptor:
    format_version: int
    sample_encoding: SampleEncoding
    fixed_sample_bytes: int
    samples_per_chunk: int
    total_samples: int
    total_chunks: int
    checksum_kind: ChecksumKind = ChecksumKind.FNV1A_64

    def __post_init__(self):
        if self.samples_per_chunk < 1:
            raise ManifestInvariantError(
                f"samples_per_chunk must be at least 1, got {self.samples_per_chunk}"
            )
        if self.total_samples < 0:
            raise ManifestInvariantError(
                f"total_samples must be non-negative, got {self.total_samples}"
            )
        expected = math.ceil(self.total_samples / self.samples_per_chunk)
        if self.total_chunks != expected:
            raise ManifestInvariantError(
                f"total_chunks is {self.total_chunks} but {self.total_samples} samples "
                f"at {self.samples_per_chunk} per chunk need {expected}"
            )

    @classmethod
    def for_samples(
        cls,
        total_samples: int,
        samples_per_chunk: int,
        encoding: SampleEncoding,
        fixed_sample_bytes: int = 0,
        checksum_kind: ChecksumKind = ChecksumKind.FNV1A_64,
    ) -> "SchemaDescriptor":
        """Build the schema for `total_samples` samples, deriving the chunk count."""
        if samples_per_chunk < 1:
            raise ValueError(f"samples_per_chunk must be at least 1, got {samples_per_chunk}")
        return cls(
            format_version=FORMAT_VERSION,
            sample_encoding=encoding,
            fixed_sample_bytes=fixed_sample_bytes if encoding is SampleEncoding.FIXED_SIZE else 0,
            samples_per_chunk=samples_per_chunk,
            total_samples=total_samples,
            total_chunks=math.ceil(total_samples / samples_per_chunk),
            checksum_kind=checksum_kind,
        )

    def chunk_sample_count(self, chunk_ordinal: int) -> int:
        """Number of samples in chunk `chunk_ordinal`."""
        first = chunk_ordinal * self.samples_per_chunk
        return min(self.samples_per_chunk, self.total_samples - first)

    def pack(self) -> bytes:
        """Encode magic, version and schema block."""
        return PREAMBLE.pack(MAGIC, self.format_version) + SCHEMA.pack(
            int(self.sample_encoding),
            int(self.checksum_kind),
            self.fixed_sample_bytes,
            self.samples_per_chunk,
            self.total_samples,
            self.total_chunks,
        )


@dataclass(frozen=True)
class ChunkIndexEntry:
    chunk_ordinal: int
    byte_offset: int
    byte_length: int
    sample_count: int
    first_global_index: int
    checksum: int

    def pack(self) -> bytes:
        """Encode as a fixed-width footer entry."""
        return INDEX_ENTRY.pack(
            self.chunk_ordinal,
            self.byte_offset,
            self.byte_length,
            self.sample_count,
            self.first_global_index,
            self.checksum,
        )

    @classmethod
    def unpack_from(cls, buffer: bytes, offset: int) -> "ChunkIndexEntry":
        """Decode the entry at `offset` in `buffer`."""
        return cls(*INDEX_ENTRY.unpack_from(buffer, offset))

    @property
    def payload_length(self) -> int:
        """Payload bytes, excluding the record header."""
        return self.byte_length - RECORD_HEADER.size


@dataclass(frozen=True)
class DatasetManifest:
    """Schema plus chunk index: the mapping from global sample indices to byte ranges."""

    schema: SchemaDescriptor
    chunk_index: Tuple[ChunkIndexEntry, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "chunk_index", tuple(self.chunk_index))
        object.__setattr__(
            self, "_starts", [entry.first_global_index for entry in self.chunk_index]
        )

    def validate(self) -> None:
        """Check every manifest invariant.

        Raises:
            ManifestInvariantError: On the first violated invariant
        """
        schema = self.schema
        if len(self.chunk_index) != schema.total_chunks:
            raise ManifestInvariantError(
                f"chunk index has {len(self.chunk_index)} entries, schema declares "
                f"{schema.total_chunks}"
            )
        expected_first = 0
        previous_end = HEADER_SIZE
        for ordinal, entry in enumerate(self.chunk_index):
            if entry.chunk_ordinal != ordinal:
                raise ManifestInvariantError(
                    f"entry {ordinal} carries chunk_ordinal {entry.chunk_ordinal}"
                )
            if entry.byte_offset < previous_end:
                raise ManifestInvariantError(
                    f"chunk {ordinal} starts at {entry.byte_offset}, overlapping bytes "
                    f"before {previous_end}"
                )
            if entry.byte_length < RECORD_HEADER.size:
                raise ManifestInvariantError(
                    f"chunk {ordinal} is {entry.byte_length} bytes, shorter than a record header"
                )
            if not 1 <= entry.sample_count <= schema.samples_per_chunk:
                raise ManifestInvariantError(
                    f"chunk {ordinal} holds {entry.sample_count} samples, allowed range is "
                    f"1..{schema.samples_per_chunk}"
                )
            if entry.first_global_index != expected_first:
                raise ManifestInvariantError(
                    f"chunk {ordinal} starts at sample {entry.first_global_index}, "
                    f"expected {expected_first}"
                )
            expected_first += entry.sample_count
            previous_end = entry.byte_offset + entry.byte_length
        if expected_first != schema.total_samples:
            raise ManifestInvariantError(
                f"chunks hold {expected_first} samples, schema declares {schema.total_samples}"
            )

    def locate(self, global_index: int) -> Tuple[int, int]:
        """Return `(chunk_ordinal, offset within chunk)` for a global index."""
        ordinal = bisect.bisect_right(self._starts, global_index) - 1
        return ordinal, global_index - self._starts[ordinal]

    def footer_bytes(self) -> bytes:
        """Encode the footer: entries, footer length, trailing magic."""
        entries = b"".join(entry.pack() for entry in self.chunk_index)
        return entries + TRAILER.pack(len(entries), TRAILING_MAGIC)


@dataclass(frozen=True)
class SampleRecord:
    global_index: int
    payload: bytes


def encode_chunk(
    payloads: Sequence[bytes], encoding: SampleEncoding, fixed_sample_bytes: int
) -> bytes:
    """Concatenate the payloads of one chunk in the schema's encoding."""
    if encoding is SampleEncoding.FIXED_SIZE:
        for payload in payloads:
            if len(payload) != fixed_sample_bytes:
                raise SampleSizeError(
                    f"fixed-size dataset expects {fixed_sample_bytes}-byte samples, "
                    f"got {len(payload)} bytes"
                )
        return b"".join(payloads)
    parts = []
    for payload in payloads:
        parts.append(SAMPLE_LENGTH.pack(len(payload)))
        parts.append(payload)
    return b"".join(parts)


def decode_chunk(
    payload: bytes, sample_count: int, encoding: SampleEncoding, fixed_sample_bytes: int
) -> List[bytes]:
    """Split a chunk payload into its samples.

    Raises:
        ValueError: If the payload does not hold exactly `sample_count` samples
    """
    if encoding is SampleEncoding.FIXED_SIZE:
        if len(payload) != sample_count * fixed_sample_bytes:
            raise ValueError(
                f"payload is {len(payload)} bytes, expected {sample_count} x "
                f"{fixed_sample_bytes}"
            )
        view = memoryview(payload)
        return [
            bytes(view[k * fixed_sample_bytes : (k + 1) * fixed_sample_bytes])
            for k in range(sample_count)
        ]
    samples = []
    position = 0
    for _ in range(sample_count):
        if position + SAMPLE_LENGTH.size > len(payload):
            raise ValueError(f"sample length prefix runs past the payload at {position}")
        (length,) = SAMPLE_LENGTH.unpack_from(payload, position)
        position += SAMPLE_LENGTH.size
        if position + length > len(payload):
            raise ValueError(f"sample of {length} bytes runs past the payload at {position}")
        samples.append(payload[position : position + length])
        position += length
    if position != len(payload):
        raise ValueError(f"{len(payload) - position} trailing bytes after the last sample")
    return samples


def decode_sample_at(
    payload: bytes,
    offset: int,
    encoding: SampleEncoding,
    fixed_sample_bytes: int,
) -> bytes:
    """Decode only the `offset`-th sample of a chunk payload."""
    if encoding is SampleEncoding.FIXED_SIZE:
        start = offset * fixed_sample_bytes
        return payload[start : start + fixed_sample_bytes]
    position = 0
    for _ in range(offset):
        (length,) = SAMPLE_LENGTH.unpack_from(payload, position)
        position += SAMPLE_LENGTH.size + length
    (length,) = SAMPLE_LENGTH.unpack_from(payload, position)
    position += SAMPLE_LENGTH.size
    return payload[position : position + length]


def default_samples_per_chunk(
    encoding: SampleEncoding,
    fixed_sample_bytes: int,
    chunk_bytes: int = DEFAULT_CHUNK_BYTES,
    variable_samples_per_chunk: int = DEFAULT_VARIABLE_SAMPLES_PER_CHUNK,
) -> int:
    """Samples per chunk so a fixed-size chunk is about `chunk_bytes` long.

    Length-prefixed samples get `variable_samples_per_chunk` as given.
    """
    if encoding is SampleEncoding.FIXED_SIZE and fixed_sample_bytes > 0:
        return max(1, chunk_bytes // fixed_sample_bytes)
    return variable_samples_per_chunk
