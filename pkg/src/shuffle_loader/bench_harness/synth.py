"""Deterministic synthetic datasets for the harness."""

from typing import Iterator, Optional

import numpy as np

from ..enums import LabelledEnum
from ..trainer_sim import SyntheticSample, sample_bytes

# Rows drawn per generator call. The generated bytes depend on it.
BLOCK_ROWS = 4096


class DatasetKind(LabelledEnum):
    STREAM = "stream"
    INDEXABLE = "indexable"
    TREE = "tree"


class OpenMode(LabelledEnum):
    """How the benchmark opens a chunked file: footer index or full scan."""

    FOOTER = "footer"
    SCAN = "scan"


def random_payloads(n: int, payload_bytes: int, seed: int) -> Iterator[bytes]:
    """`n` opaque payloads of `payload_bytes` random bytes each."""
    if n < 0:
        raise ValueError(f"sample count must be non-negative, got {n}")
    if payload_bytes < 1:
        raise ValueError(f"sample size must be at least 1 byte, got {payload_bytes}")
    rng = np.random.default_rng(seed)
    remaining = n
    while remaining > 0:
        rows = min(BLOCK_ROWS, remaining)
        block = rng.integers(0, 256, size=(rows, payload_bytes), dtype=np.uint8)
        for row in block:
            yield row.tobytes()
        remaining -= rows


def variable_payloads(n: int, min_bytes: int, max_bytes: int, seed: int) -> Iterator[bytes]:
    """`n` random payloads with lengths drawn uniformly from [min_bytes, max_bytes]."""
    if n < 0:
        raise ValueError(f"sample count must be non-negative, got {n}")
    if not 0 <= min_bytes <= max_bytes:
        raise ValueError(
            f"sample sizes must satisfy 0 <= min <= max, got min {min_bytes}, max {max_bytes}"
        )
    rng = np.random.default_rng(seed)
    remaining = n
    while remaining > 0:
        rows = min(BLOCK_ROWS, remaining)
        lengths = rng.integers(min_bytes, max_bytes + 1, size=rows)
        data = rng.integers(0, 256, size=int(lengths.sum()), dtype=np.uint8).tobytes()
        offset = 0
        for length in lengths.tolist():
            yield data[offset : offset + length]
            offset += length
        remaining -= rows


def linear_payloads(n: int, dim: int, seed: int, noise: float = 0.01) -> Iterator[bytes]:
    """`n` encoded SyntheticSamples of a random linear least-squares problem."""
    if n < 0:
        raise ValueError(f"sample count must be non-negative, got {n}")
    if dim < 1:
        raise ValueError(f"dim must be at least 1, got {dim}")
    rng = np.random.default_rng(seed)
    weights = rng.normal(size=dim)
    remaining = n
    while remaining > 0:
        rows = min(BLOCK_ROWS, remaining)
        xs = rng.normal(size=(rows, dim))
        ys = xs @ weights + noise * rng.normal(size=rows)
        for x, y in zip(xs, ys):
            yield SyntheticSample(x, y).encode()
        remaining -= rows


def payloads_for(
    n: int,
    seed: int,
    payload_bytes: int,
    dim: Optional[int] = None,
    max_payload_bytes: Optional[int] = None,
) -> Iterator[bytes]:
    """SyntheticSamples when `dim` is given, random bytes otherwise.

    With `max_payload_bytes` the random payloads vary in size between
    `payload_bytes` and `max_payload_bytes`.
    """
    if dim is not None:
        if max_payload_bytes is not None:
            raise ValueError(
                "--dim writes fixed-size samples and cannot be combined with --max-sample-bytes"
            )
        return linear_payloads(n, dim, seed)
    if max_payload_bytes is not None:
        return variable_payloads(n, payload_bytes, max_payload_bytes, seed)
    return random_payloads(n, payload_bytes, seed)


def payload_size(payload_bytes: int, dim: Optional[int] = None) -> int:
    """Size of each payload `payloads_for` produces."""
    return sample_bytes(dim) if dim is not None else payload_bytes
