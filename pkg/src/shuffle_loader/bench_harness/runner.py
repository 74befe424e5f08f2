"""The loading and training benchmark.

Each repeat runs `workers` emulated data-parallel learners as threads, each
with its own epoch loader over its strided shard of the shared permutation.
Learners run their warmup steps, meet at a barrier, and then run the measured
steps; throughput is total measured samples over the wall time from the
barrier to the last learner finishing.
"""

import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import count
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Union

import numpy as np

from ..dataset_format import FileTreeDataset, open_indexable, open_stream_scanned
from ..errors import BenchValidationError
from ..fetch_engine import (
    AssembledBatch,
    FetchConfig,
    FetchMonitor,
    FetchStrategy,
    PreprocessFn,
    SampleSource,
    epoch_loader,
)
from ..shuffle_sampler import EpochPlan, ShuffleMode, ShuffleSpec, epoch_order
from ..timing import STAGES
from .metrics import MetricsRecord, aggregate
from .synth import OpenMode

logger = logging.getLogger(__name__)

END_TO_END = "end_to_end"
LOADING_ONLY = "loading_only"


@dataclass(frozen=True)
class BenchConfig:
    dataset_path: Path
    mode: ShuffleMode = ShuffleMode.INDICES_MAPPING
    batch_size: int = 64
    steps: int = 300
    warmup_steps: int = 20
    repeats: int = 3
    fetch: FetchConfig = field(default_factory=FetchConfig)
    simulated_compute: float = 0.0
    workers: int = 1
    seed: int = 0
    buffer_size: int = 1024
    open_mode: OpenMode = OpenMode.FOOTER
    cache_chunks: int = 0
    drop_cache: bool = False
    expected_samples: Optional[int] = None

    def __post_init__(self):
        checks = [
            (self.steps >= 1, f"steps must be at least 1, got {self.steps}"),
            (self.repeats >= 1, f"repeats must be at least 1, got {self.repeats}"),
            (self.warmup_steps >= 0, f"warmup must be non-negative, got {self.warmup_steps}"),
            (self.batch_size >= 1, f"batch size must be at least 1, got {self.batch_size}"),
            (self.workers >= 1, f"workers must be at least 1, got {self.workers}"),
            (self.simulated_compute >= 0, "simulated compute must be non-negative"),
            (self.buffer_size >= 1, f"buffer size must be at least 1, got {self.buffer_size}"),
        ]
        for ok, message in checks:
            if not ok:
                raise BenchValidationError(message)

    @property
    def label(self) -> str:
        """`<mode>/<strategy>`, the key `compare` pairs rows by."""
        return f"{self.mode.label}/{self.fetch.strategy.label}"


def open_source(path: Union[str, os.PathLike], open_mode: OpenMode = OpenMode.FOOTER, cache_chunks: int = 0):
    """Open a dataset for random access: a sample tree directory or a chunked file."""
    path = Path(path)
    if path.is_dir():
        return FileTreeDataset(path)
    if open_mode is OpenMode.SCAN:
        return open_stream_scanned(path, cache_chunks=cache_chunks)
    return open_indexable(path, cache_chunks=cache_chunks)


def validate_for_bench(config: BenchConfig, total_samples: int) -> None:
    """Reject dataset/configuration combinations before anything is measured.

    Raises:
        BenchValidationError: On any mismatch
    """
    if config.expected_samples is not None and config.expected_samples != total_samples:
        raise BenchValidationError(
            f"{config.dataset_path} holds {total_samples} samples, "
            f"the configuration expects {config.expected_samples}"
        )
    shard = total_samples // config.workers
    if shard < config.batch_size:
        raise BenchValidationError(
            f"{total_samples} samples over {config.workers} workers leaves {shard} per worker, "
            f"fewer than one batch of {config.batch_size}.\n"
            "  Hint: generate more samples or lower --batch-size / --workers"
        )


class _SharedOrders:
    """Per-epoch permutations computed once and shared by all learners."""

    def __init__(self, config: BenchConfig, total_samples: int):
        self._config = config
        self._total = total_samples
        self._lock = threading.Lock()
        self._orders: Dict[int, np.ndarray] = {}

    def order(self, epoch: int) -> np.ndarray:
        with self._lock:
            if epoch not in self._orders:
                spec = ShuffleSpec(self._config.mode, self._config.seed, epoch, self._config.buffer_size)
                self._orders[epoch] = epoch_order(spec, self._total)
                for stale in [e for e in self._orders if e < epoch - 1]:
                    del self._orders[stale]
            return self._orders[epoch]


def _batches(
    source: SampleSource,
    orders: _SharedOrders,
    config: BenchConfig,
    worker_id: int,
    monitor: FetchMonitor,
    preprocess: Optional[PreprocessFn],
) -> Iterator[AssembledBatch]:
    for epoch in count():
        plan = EpochPlan(
            order=orders.order(epoch),
            batch_size=config.batch_size,
            drop_last=True,
            worker_id=worker_id,
            world_size=config.workers,
            epoch=epoch,
        )
        with epoch_loader(source, plan, config.fetch, preprocess, monitor=monitor) as loader:
            yield from loader


@dataclass
class _LearnerResult:
    start: float
    end: float
    samples: int
    monitor: FetchMonitor


def _run_learner(
    source: SampleSource,
    orders: _SharedOrders,
    config: BenchConfig,
    worker_id: int,
    compute: float,
    barrier: threading.Barrier,
    preprocess: Optional[PreprocessFn],
) -> _LearnerResult:
    monitor = FetchMonitor()
    batches = _batches(source, orders, config, worker_id, monitor, preprocess)
    try:
        for _ in range(config.warmup_steps):
            next(batches)
            if compute:
                time.sleep(compute)
        monitor.timings.reset()
        monitor.fetches.reset()
        monitor.batches.reset()
        barrier.wait()
        start = time.perf_counter()
        samples = 0
        for _ in range(config.steps):
            batch = next(batches)
            with monitor.timings.measure("consume"):
                if compute:
                    time.sleep(compute)
            samples += len(batch)
        end = time.perf_counter()
    except BaseException:
        barrier.abort()
        raise
    finally:
        batches.close()
    return _LearnerResult(start, end, samples, monitor)


def run_repeat(
    source: SampleSource,
    config: BenchConfig,
    compute: float,
    repeat: int,
    variant: str,
    preprocess: Optional[PreprocessFn] = None,
) -> MetricsRecord:
    """Run one measured repeat and return its row."""
    if config.drop_cache and hasattr(source, "drop_caches") and not source.drop_caches():
        logger.warning("page cache eviction is not supported on this platform")
    orders = _SharedOrders(config, len(source))
    barrier = threading.Barrier(config.workers)
    bytes_before = getattr(source, "bytes_read", 0)
    with ThreadPoolExecutor(max_workers=config.workers, thread_name_prefix="learner") as pool:
        futures = [
            pool.submit(_run_learner, source, orders, config, w, compute, barrier, preprocess)
            for w in range(config.workers)
        ]
        outcomes = [f.exception() for f in futures]
    failures = [e for e in outcomes if e is not None and not isinstance(e, threading.BrokenBarrierError)]
    if failures:
        raise failures[0]
    results = [f.result() for f in futures]

    wall_time = max(r.end for r in results) - min(r.start for r in results)
    samples = sum(r.samples for r in results)
    stages = {stage: sum(r.monitor.timings.snapshot()[stage] for r in results) for stage in STAGES}
    is_unordered = config.fetch.strategy is FetchStrategy.UNORDERED
    record = MetricsRecord(
        label=config.label,
        mode=config.mode.label,
        strategy=config.fetch.strategy.label,
        variant=variant,
        repeat=str(repeat),
        batch_size=config.batch_size,
        dataset_samples=len(source),
        steps=config.steps,
        samples=samples,
        wall_time=wall_time,
        samples_per_second=samples / wall_time if wall_time > 0 else float("inf"),
        bytes_read=getattr(source, "bytes_read", 0) - bytes_before,
        peak_in_flight_fetches=max(r.monitor.fetches.peak for r in results),
        peak_in_flight_batches=max(r.monitor.batches.peak for r in results),
        concurrency=config.fetch.concurrency_for(config.batch_size) if is_unordered else 1,
        prefetch_depth=config.fetch.prefetch_depth if is_unordered else 0,
        workers=config.workers,
        inject_latency_us=config.fetch.synthetic_read_latency * 1e6,
        compute_us=compute * 1e6,
        open_mode=config.open_mode.label if not Path(config.dataset_path).is_dir() else "tree",
        open_seconds=getattr(source, "open_seconds", 0.0),
        open_bytes=getattr(source, "open_bytes", 0),
        **stages,
    )
    logger.info(
        "%s %s repeat %d: %.1f samples/s over %.3fs",
        record.label,
        variant,
        repeat,
        record.samples_per_second,
        wall_time,
    )
    return record


def run_bench(
    config: BenchConfig,
    preprocess: Optional[PreprocessFn] = None,
    source: Optional[SampleSource] = None,
) -> List[MetricsRecord]:
    """Run every repeat of every variant and return the rows.

    The end-to-end variant sleeps `simulated_compute` per step in place of
    model work; the loading-only variant runs with no compute. With no
    simulated compute the two are the same measurement and only loading-only
    rows are produced. Each variant contributes one row per repeat followed by
    mean and stddev rows.

    Args:
        config: What to measure
        preprocess: Optional per-sample preprocessing run on the fetch workers
        source: An already opened dataset; opened from `config.dataset_path` when None

    Returns:
        List[MetricsRecord]: Rows in emission order

    Raises:
        BenchValidationError: If the dataset does not fit the configuration
    """
    owned = source is None
    if owned:
        source = open_source(config.dataset_path, config.open_mode, config.cache_chunks)
    try:
        validate_for_bench(config, len(source))
        variants = [(LOADING_ONLY, 0.0)]
        if config.simulated_compute > 0:
            variants.insert(0, (END_TO_END, config.simulated_compute))
        rows: List[MetricsRecord] = []
        for variant, compute in variants:
            repeats = [
                run_repeat(source, config, compute, repeat, variant, preprocess)
                for repeat in range(config.repeats)
            ]
            rows.extend(repeats)
            rows.extend(aggregate(repeats))
        return rows
    finally:
        if owned:
            source.close()
