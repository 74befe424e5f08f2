"""Project settings.

Every setting can be overridden with an environment variable named
`SHUFFLE_LOADER_<NAME>`; the command line overrides both.
"""

from pathlib import Path
from typing import Optional

from .bench_harness.synth import DatasetKind, OpenMode
from .checksum import ChecksumKind
from .dataset_format.layout import DEFAULT_CHUNK_BYTES, DEFAULT_VARIABLE_SAMPLES_PER_CHUNK
from .fetch_engine import AssemblyPolicy
from .settings import Settings
from .shuffle_sampler import ShuffleMode

HARNESS_CHUNK_BYTES = 256 * 1024


class LoaderSettings(Settings):
    """Library defaults for writing, opening and fetching datasets."""

    __env_prefix__ = "SHUFFLE_LOADER_"

    chunk_bytes: int = DEFAULT_CHUNK_BYTES
    samples_per_chunk: Optional[int] = None
    variable_samples_per_chunk: int = DEFAULT_VARIABLE_SAMPLES_PER_CHUNK
    checksum: ChecksumKind = ChecksumKind.FNV1A_64
    cache_chunks: int = 0
    max_concurrent_fetches: Optional[int] = None
    prefetch_depth: int = 1
    assembly: AssemblyPolicy = AssemblyPolicy.ARRIVAL_ORDER
    log_level: str = "WARNING"


class BenchSettings(LoaderSettings):
    """Settings behind the `shuffle-loader` subcommands."""

    # gen
    samples: int = 100_000
    sample_bytes: int = 1024
    max_sample_bytes: Optional[int] = None
    dim: Optional[int] = None
    chunk_samples: Optional[int] = None
    seed: int = 0
    format: DatasetKind = DatasetKind.INDEXABLE
    # An uncached sample read checksums its whole chunk.
    chunk_bytes: int = HARNESS_CHUNK_BYTES
    checksum: ChecksumKind = ChecksumKind.BLAKE2B_64

    # bench
    mode: ShuffleMode = ShuffleMode.INDICES_MAPPING
    ordered: bool = False
    batch_size: int = 64
    steps: int = 300
    warmup: int = 20
    repeats: int = 3
    concurrency: Optional[int] = None
    inject_latency_us: float = 0.0
    compute_us: float = 0.0
    workers: int = 1
    buffer_size: int = 1024
    drop_cache: bool = False
    open: OpenMode = OpenMode.FOOTER
    out: Optional[Path] = None
    json: bool = False
