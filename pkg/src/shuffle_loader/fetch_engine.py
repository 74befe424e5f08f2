"""Batch generation: the control plane between an epoch plan and the trainer.

The ordered baseline fetches and preprocesses a batch's samples one at a time
in requested order. Unordered generation submits every sample of a batch to a
worker pool; each worker fetches its sample and preprocesses it right away,
and the batch is assembled as samples complete. Intra-batch order is relaxed,
inter-batch order never is.
"""

import logging
import os
import threading
import time
from collections import deque
from concurrent.futures import Future, ThreadPoolExecutor, as_completed, wait
from dataclasses import dataclass, field
from typing import Any, Callable, Deque, Dict, Iterator, List, Optional, Protocol, Tuple

from .dataset_format.layout import SampleRecord
from .enums import LabelledEnum
from .errors import BatchFetchError
from .shuffle_sampler import BatchSpec, EpochPlan
from .timing import Gauge, StageTimes

logger = logging.getLogger(__name__)

PreprocessFn = Callable[[bytes], Any]


class SampleSource(Protocol):
    """Anything that serves samples by global index and tolerates concurrent calls."""

    def __len__(self) -> int: ...

    def get_sample(
        self, global_index: int, *, read_latency: float = 0.0, timings: Optional[StageTimes] = None
    ) -> SampleRecord: ...


class AssemblyPolicy(LabelledEnum):
    ARRIVAL_ORDER = "arrival-order"
    SLOT_ORDER = "slot-order"


class FetchStrategy(LabelledEnum):
    ORDERED = "ordered"
    UNORDERED = "unordered"


class ErrorPolicy(LabelledEnum):
    FAIL_FAST = "fail-fast"
    SKIP_AND_REPORT = "skip-and-report"


def default_concurrency(batch_size: int) -> int:
    """min(batch_size, 4 x hardware threads)."""
    return max(1, min(batch_size, 4 * (os.cpu_count() or 1)))


@dataclass(frozen=True)
class FetchConfig:
    """How batches are fetched.

    `max_concurrent_fetches` None picks `default_concurrency`; 0 means one
    worker per intra-batch sample. `synthetic_read_latency` is in seconds and
    is injected inside each chunk read.
    """

    max_concurrent_fetches: Optional[int] = None
    prefetch_depth: int = 1
    assembly: AssemblyPolicy = AssemblyPolicy.ARRIVAL_ORDER
    synthetic_read_latency: float = 0.0
    strategy: FetchStrategy = FetchStrategy.UNORDERED
    error_policy: ErrorPolicy = ErrorPolicy.FAIL_FAST

    def __post_init__(self):
        if self.max_concurrent_fetches is not None and self.max_concurrent_fetches < 0:
            raise ValueError(
                f"max_concurrent_fetches must be >= 1 (or 0 for one per sample), "
                f"got {self.max_concurrent_fetches}"
            )
        if self.prefetch_depth < 0:
            raise ValueError(f"prefetch_depth must be >= 0, got {self.prefetch_depth}")
        if self.synthetic_read_latency < 0:
            raise ValueError(
                f"synthetic_read_latency must be >= 0, got {self.synthetic_read_latency}"
            )

    def concurrency_for(self, batch_size: int) -> int:
        """Worker count for batches of `batch_size`."""
        if self.max_concurrent_fetches is None:
            return default_concurrency(batch_size)
        if self.max_concurrent_fetches == 0:
            return max(1, batch_size)
        return self.max_concurrent_fetches

    @classmethod
    def from_settings(cls, settings, **overrides) -> "FetchConfig":
        """Build a config from a LoaderSettings-like class, then apply overrides."""
        values = dict(
            max_concurrent_fetches=settings.max_concurrent_fetches,
            prefetch_depth=settings.prefetch_depth,
            assembly=settings.assembly,
        )
        values.update(overrides)
        return cls(**values)


@dataclass
class AssembledBatch:
    batch_ordinal: int
    samples: List[Tuple[int, Any]]
    requested: Tuple[int, ...]
    arrival_order: List[int]

    def __len__(self) -> int:
        return len(self.samples)

    def by_index(self) -> List[Tuple[int, Any]]:
        """Samples sorted by global index (stable for repeated indices)."""
        return sorted(self.samples, key=lambda pair: pair[0])


@dataclass(frozen=True)
class BatchFailure:
    batch_ordinal: int
    global_index: int
    error: BaseException


@dataclass
class FetchMonitor:
    """Instrumentation shared by the fetches of one loader."""

    timings: StageTimes = field(default_factory=StageTimes)
    fetches: Gauge = field(default_factory=Gauge)
    batches: Gauge = field(default_factory=Gauge)


class _Cancelled(Exception):
    pass


def _fetch_and_preprocess(
    source: SampleSource,
    global_index: int,
    preprocess: Optional[PreprocessFn],
    read_latency: float,
    monitor: FetchMonitor,
) -> Any:
    with monitor.fetches.track():
        record = source.get_sample(
            global_index, read_latency=read_latency, timings=monitor.timings
        )
    if preprocess is None:
        return record.payload
    start = time.perf_counter()
    payload = preprocess(record.payload)
    monitor.timings.add("preprocess", time.perf_counter() - start)
    return payload


def generate_batch_ordered(
    source: SampleSource,
    batch_spec: BatchSpec,
    preprocess: Optional[PreprocessFn] = None,
    *,
    read_latency: float = 0.0,
    monitor: Optional[FetchMonitor] = None,
) -> AssembledBatch:
    """Fetch and preprocess a batch one sample at a time, in requested order.

    Raises:
        BatchFetchError: On the first failing sample
    """
    monitor = monitor if monitor is not None else FetchMonitor()
    samples = []
    with monitor.batches.track():
        for global_index in batch_spec.indices:
            try:
                payload = _fetch_and_preprocess(
                    source, global_index, preprocess, read_latency, monitor
                )
            except Exception as e:
                raise BatchFetchError(batch_spec.batch_ordinal, global_index, e) from e
            samples.append((global_index, payload))
    return AssembledBatch(
        batch_ordinal=batch_spec.batch_ordinal,
        samples=samples,
        requested=tuple(batch_spec.indices),
        arrival_order=list(batch_spec.indices),
    )


class _BatchJob:
    """The in-flight fetches of one batch on a shared pool."""

    def __init__(
        self,
        source: SampleSource,
        batch_spec: BatchSpec,
        preprocess: Optional[PreprocessFn],
        config: FetchConfig,
        monitor: FetchMonitor,
    ):
        self._source = source
        self.batch_spec = batch_spec
        self._preprocess = preprocess
        self._config = config
        self._monitor = monitor
        self._cancelled = threading.Event()
        self._lock = threading.Lock()
        self._arrivals: List[Tuple[int, Any]] = []
        self._futures: Dict[Future, int] = {}
        self._open = False

    def submit(self, pool: ThreadPoolExecutor) -> None:
        self._monitor.batches.increment()
        self._open = True
        for position, global_index in enumerate(self.batch_spec.indices):
            future = pool.submit(self._run, position, global_index)
            self._futures[future] = position
        logger.debug(
            "batch %d: submitted %d fetches", self.batch_spec.batch_ordinal, len(self._futures)
        )

    def _run(self, position: int, global_index: int) -> None:
        if self._cancelled.is_set():
            raise _Cancelled()
        payload = _fetch_and_preprocess(
            self._source,
            global_index,
            self._preprocess,
            self._config.synthetic_read_latency,
            self._monitor,
        )
        with self._lock:
            self._arrivals.append((position, payload))

    def _release(self) -> None:
        if self._open:
            self._open = False
            self._monitor.batches.decrement()

    def cancel(self) -> None:
        """Stop work that has not started and wait for work that has."""
        self._cancelled.set()
        for future in self._futures:
            future.cancel()
        wait(list(self._futures))
        self._release()
        logger.debug("batch %d: cancelled", self.batch_spec.batch_ordinal)

    def collect(self) -> AssembledBatch:
        """Wait for every sample and assemble the batch.

        Raises:
            BatchFetchError: On the first failure, after cancelling the rest
        """
        indices = self.batch_spec.indices
        for future in as_completed(self._futures):
            error = future.exception()
            if error is not None and not isinstance(error, _Cancelled):
                self.cancel()
                failed = indices[self._futures[future]]
                raise BatchFetchError(self.batch_spec.batch_ordinal, failed, error) from error
        self._release()

        with self._monitor.timings.measure("assemble"):
            with self._lock:
                arrivals = list(self._arrivals)
            arrival_order = [indices[position] for position, _ in arrivals]
            if self._config.assembly is AssemblyPolicy.SLOT_ORDER:
                arrivals.sort(key=lambda pair: pair[0])
            samples = [(indices[position], payload) for position, payload in arrivals]
        return AssembledBatch(
            batch_ordinal=self.batch_spec.batch_ordinal,
            samples=samples,
            requested=tuple(indices),
            arrival_order=arrival_order,
        )


def generate_batch_unordered(
    source: SampleSource,
    batch_spec: BatchSpec,
    config: FetchConfig,
    preprocess: Optional[PreprocessFn] = None,
    *,
    executor: Optional[ThreadPoolExecutor] = None,
    monitor: Optional[FetchMonitor] = None,
) -> AssembledBatch:
    """Fetch a batch's samples concurrently and assemble them as they complete.

    At most `config.concurrency_for(len(batch))` fetches run at once (the pool
    size). Each sample is preprocessed on the worker that fetched it as soon
    as it arrives.

    Args:
        source: The dataset to read from
        batch_spec: Indices to fetch
        config: Concurrency and assembly settings
        preprocess: Optional per-sample transformation
        executor: Optional pool to run on; a private one is created otherwise
        monitor: Optional instrumentation

    Returns:
        AssembledBatch: Samples in arrival order (or slot order), with the arrival audit trail

    Raises:
        BatchFetchError: On the first failing sample; outstanding fetches are cancelled
    """
    monitor = monitor if monitor is not None else FetchMonitor()
    job = _BatchJob(source, batch_spec, preprocess, config, monitor)
    if executor is not None:
        job.submit(executor)
        return job.collect()
    workers = config.concurrency_for(len(batch_spec))
    with ThreadPoolExecutor(max_workers=workers, thread_name_prefix="fetch") as pool:
        job.submit(pool)
        return job.collect()


class EpochLoader:
    """Ordered stream of assembled batches for one epoch plan.

    Batches are yielded in batch_ordinal order. With the unordered strategy
    up to `prefetch_depth + 1` batches have work outstanding at any instant,
    all sharing one pool of `concurrency_for(batch_size)` workers. One
    consumer at a time; the loader may be handed between threads.

    In skip-and-report mode failed batches are recorded in `failures` and
    skipped; otherwise the first failure ends the stream.
    """

    def __init__(
        self,
        source: SampleSource,
        plan: EpochPlan,
        config: FetchConfig,
        preprocess: Optional[PreprocessFn] = None,
        monitor: Optional[FetchMonitor] = None,
    ):
        self._source = source
        self._config = config
        self._preprocess = preprocess
        self.monitor = monitor if monitor is not None else FetchMonitor()
        self._batches: Iterator[BatchSpec] = plan.iter_batches()
        self._pending: Deque[_BatchJob] = deque()
        self.failures: List[BatchFailure] = []
        self._closed = False
        self._pool: Optional[ThreadPoolExecutor] = None
        if config.strategy is FetchStrategy.UNORDERED:
            self._pool = ThreadPoolExecutor(
                max_workers=config.concurrency_for(plan.batch_size),
                thread_name_prefix="fetch",
            )

    def __iter__(self) -> "EpochLoader":
        return self

    def __enter__(self) -> "EpochLoader":
        return self

    def __exit__(self, *_: object) -> None:
        self.close()

    def _fill(self) -> None:
        while len(self._pending) < self._config.prefetch_depth + 1:
            spec = next(self._batches, None)
            if spec is None:
                break
            job = _BatchJob(self._source, spec, self._preprocess, self._config, self.monitor)
            job.submit(self._pool)
            self._pending.append(job)

    def _next_batch(self) -> Optional[AssembledBatch]:
        if self._pool is None:
            spec = next(self._batches, None)
            if spec is None:
                return None
            return generate_batch_ordered(
                self._source,
                spec,
                self._preprocess,
                read_latency=self._config.synthetic_read_latency,
                monitor=self.monitor,
            )
        self._fill()
        if not self._pending:
            return None
        return self._pending.popleft().collect()

    def __next__(self) -> AssembledBatch:
        while not self._closed:
            try:
                batch = self._next_batch()
            except BatchFetchError as e:
                if self._config.error_policy is ErrorPolicy.SKIP_AND_REPORT:
                    logger.warning("skipping %s", e)
                    self.failures.append(BatchFailure(e.batch_ordinal, e.global_index, e.cause))
                    continue
                self.close()
                raise
            if batch is None:
                break
            return batch
        self.close()
        raise StopIteration

    def close(self) -> None:
        """Cancel outstanding batches and shut the pool down."""
        if self._closed:
            return
        self._closed = True
        while self._pending:
            self._pending.popleft().cancel()
        if self._pool is not None:
            self._pool.shutdown(wait=True)


def epoch_loader(
    source: SampleSource,
    epoch_plan: EpochPlan,
    config: FetchConfig,
    preprocess: Optional[PreprocessFn] = None,
    *,
    monitor: Optional[FetchMonitor] = None,
) -> EpochLoader:
    """Stream the batches of `epoch_plan` in order; see `EpochLoader`."""
    return EpochLoader(source, epoch_plan, config, preprocess, monitor)
