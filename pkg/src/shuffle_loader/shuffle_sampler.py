"""Epoch index orders: sequential, global permutation (indices mapping), buffered shuffle.

Every order is a permutation of [0, n) held as an int64 numpy array and is a
pure function of its arguments, so any number of workers can compute the same
plan independently.
"""

from array import array
from dataclasses import dataclass
from typing import Iterator, List, Sequence, Tuple

import numpy as np

from .enums import LabelledEnum
from .prng import Xoshiro256StarStar, epoch_seed


class ShuffleMode(LabelledEnum):
    SEQUENTIAL = "sequential"
    INDICES_MAPPING = "indices-mapping"
    BUFFERED = "buffered"


@dataclass(frozen=True)
class ShuffleSpec:
    mode: ShuffleMode = ShuffleMode.INDICES_MAPPING
    seed: int = 0
    epoch: int = 0
    buffer_size: int = 1

    def __post_init__(self):
        if self.epoch < 0:
            raise ValueError(f"epoch must be non-negative, got {self.epoch}")
        if self.mode is ShuffleMode.BUFFERED and self.buffer_size < 1:
            raise ValueError(f"buffered shuffling needs buffer_size >= 1, got {self.buffer_size}")

    def for_epoch(self, epoch: int) -> "ShuffleSpec":
        """The same spec for another epoch."""
        return ShuffleSpec(self.mode, self.seed, epoch, self.buffer_size)


@dataclass(frozen=True)
class BatchSpec:
    batch_ordinal: int
    indices: Tuple[int, ...]

    def __len__(self) -> int:
        return len(self.indices)


def _as_int64(values: array) -> np.ndarray:
    if not values:
        return np.empty(0, dtype=np.int64)
    return np.frombuffer(values, dtype=np.int64)


def make_permutation(n: int, seed: int, epoch: int = 0) -> np.ndarray:
    """Uniform random permutation of [0, n) by Fisher-Yates.

    Deterministic in (n, seed, epoch); the generator is seeded with
    `epoch_seed(seed, epoch)`. The shuffle runs in place over one 8-byte
    slot per index, with one generator draw per index in pure Python.
    """
    if n < 0:
        raise ValueError(f"n must be non-negative, got {n}")
    rng = Xoshiro256StarStar(epoch_seed(seed, epoch))
    order = array("q", range(n))
    for i in range(n - 1, 0, -1):
        j = rng.below(i + 1)
        order[i], order[j] = order[j], order[i]
    return _as_int64(order)


def buffered_shuffle_order(n: int, seed: int, buffer_size: int, epoch: int = 0) -> np.ndarray:
    """Streaming-buffer shuffle of [0, n).

    The buffer starts with indices 0..buffer_size-1. Each step emits a
    uniformly chosen slot and refills it with the next sequential index; once
    the input is exhausted the buffer drains uniformly. An index can only be
    emitted after it entered the buffer, so out[k] <= k + buffer_size - 1.
    """
    if n < 0:
        raise ValueError(f"n must be non-negative, got {n}")
    if buffer_size < 1:
        raise ValueError(f"buffer_size must be at least 1, got {buffer_size}")
    rng = Xoshiro256StarStar(epoch_seed(seed, epoch))
    buffer = list(range(min(buffer_size, n)))
    next_index = len(buffer)
    out = array("q")
    while buffer:
        slot = rng.below(len(buffer))
        out.append(buffer[slot])
        if next_index < n:
            buffer[slot] = next_index
            next_index += 1
        else:
            buffer[slot] = buffer[-1]
            buffer.pop()
    return _as_int64(out)


def sequential_order(n: int) -> np.ndarray:
    """The identity order 0..n-1."""
    if n < 0:
        raise ValueError(f"n must be non-negative, got {n}")
    return np.arange(n, dtype=np.int64)


def epoch_order(spec: ShuffleSpec, n: int) -> np.ndarray:
    """The full (unsharded) index order of one epoch."""
    if spec.mode is ShuffleMode.SEQUENTIAL:
        return sequential_order(n)
    if spec.mode is ShuffleMode.BUFFERED:
        return buffered_shuffle_order(n, spec.seed, spec.buffer_size, spec.epoch)
    return make_permutation(n, spec.seed, spec.epoch)


def iter_batches(order: Sequence[int], batch_size: int, drop_last: bool = False) -> Iterator[BatchSpec]:
    """Lazy form of `partition_batches`: one BatchSpec at a time."""
    if batch_size < 1:
        raise ValueError(f"batch_size must be at least 1, got {batch_size}")
    values = np.asarray(order, dtype=np.int64)
    stop = len(values) - len(values) % batch_size if drop_last else len(values)
    for ordinal, start in enumerate(range(0, stop, batch_size)):
        yield BatchSpec(ordinal, tuple(values[start : start + batch_size].tolist()))


def partition_batches(order: Sequence[int], batch_size: int, drop_last: bool = False) -> List[BatchSpec]:
    """Cut `order` into consecutive batches of `batch_size`.

    The final partial batch is kept unless `drop_last`.
    """
    return list(iter_batches(order, batch_size, drop_last))


def shard_for_worker(order: Sequence[int], worker_id: int, world_size: int) -> np.ndarray:
    """Strided shard `order[worker_id::world_size]` for one data-parallel worker."""
    if world_size < 1:
        raise ValueError(f"world_size must be at least 1, got {world_size}")
    if not 0 <= worker_id < world_size:
        raise ValueError(f"worker_id must be in [0, {world_size}), got {worker_id}")
    return np.asarray(order, dtype=np.int64)[worker_id::world_size]


@dataclass(frozen=True, eq=False)
class EpochPlan:
    """One epoch's permutation, batching and sharding.

    `order` is the full permutation of [0, N); this worker's batches come from
    its strided shard.
    """

    order: np.ndarray
    batch_size: int
    drop_last: bool = False
    worker_id: int = 0
    world_size: int = 1
    epoch: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be at least 1, got {self.batch_size}")
        if self.world_size < 1:
            raise ValueError(f"world_size must be at least 1, got {self.world_size}")
        if not 0 <= self.worker_id < self.world_size:
            raise ValueError(f"worker_id must be in [0, {self.world_size}), got {self.worker_id}")

    @property
    def total_samples(self) -> int:
        """N, the size of the permuted index space."""
        return len(self.order)

    @property
    def shard(self) -> np.ndarray:
        """This worker's part of the order."""
        return shard_for_worker(self.order, self.worker_id, self.world_size)

    def batches(self) -> List[BatchSpec]:
        """This worker's batches, ordinals from 0."""
        return partition_batches(self.shard, self.batch_size, self.drop_last)

    def iter_batches(self) -> Iterator[BatchSpec]:
        """The same batches as `batches`, built as they are consumed."""
        return iter_batches(self.shard, self.batch_size, self.drop_last)

    def __len__(self) -> int:
        shard_length = len(self.shard)
        if self.drop_last:
            return shard_length // self.batch_size
        return -(-shard_length // self.batch_size)


def make_epoch_plan(
    spec: ShuffleSpec,
    n: int,
    batch_size: int,
    drop_last: bool = False,
    worker_id: int = 0,
    world_size: int = 1,
) -> EpochPlan:
    """Build the plan for `spec.epoch` over a dataset of `n` samples."""
    return EpochPlan(
        order=epoch_order(spec, n),
        batch_size=batch_size,
        drop_last=drop_last,
        worker_id=worker_id,
        world_size=world_size,
        epoch=spec.epoch,
    )
