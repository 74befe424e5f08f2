"""A minimal SGD consumer for checking that intra-batch order does not matter.

The model is linear least squares: per-sample loss (theta . x - y)^2. Batch
gradients are reduced after sorting contributions by global index, so the
update is a function of the batch's (index, sample) multiset and the same bits
come out however the fetch engine ordered the batch.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import BatchFetchError, NumericError, SampleSizeError, TrainingError
from .fetch_engine import FetchConfig, FetchMonitor, SampleSource, epoch_loader
from .shuffle_sampler import EpochPlan

logger = logging.getLogger(__name__)

FLOAT = np.dtype("<f8")


def _as_vector(values) -> np.ndarray:
    return np.array(values, dtype=np.float64).reshape(-1)


@dataclass(frozen=True, eq=False)
class ModelState:
    """Parameters theta and learning rate eta."""

    theta: np.ndarray
    eta: float

    def __post_init__(self):
        object.__setattr__(self, "theta", _as_vector(self.theta))
        if not self.eta > 0 or not np.isfinite(self.eta):
            raise ValueError(f"learning rate must be finite and positive, got {self.eta}")
        if not np.all(np.isfinite(self.theta)):
            raise NumericError(f"parameters are not finite: {self.theta}")

    @classmethod
    def zeros(cls, dim: int, eta: float) -> "ModelState":
        """All-zero parameters of dimension `dim`."""
        return cls(np.zeros(dim), eta)


@dataclass(frozen=True, eq=False)
class SyntheticSample:
    """Features `x` and target `y`, stored as dim+1 little-endian float64 values."""

    x: np.ndarray
    y: float

    def __post_init__(self):
        object.__setattr__(self, "x", _as_vector(self.x))
        object.__setattr__(self, "y", float(self.y))

    @property
    def dim(self) -> int:
        return self.x.shape[0]

    def encode(self) -> bytes:
        """Fixed-size payload: x followed by y."""
        return np.append(self.x, self.y).astype(FLOAT).tobytes()

    @classmethod
    def decode(cls, payload: bytes) -> "SyntheticSample":
        """Inverse of `encode`.

        Raises:
            SampleSizeError: If the payload is not a whole number (>= 2) of float64 values
        """
        if len(payload) < 2 * FLOAT.itemsize or len(payload) % FLOAT.itemsize:
            raise SampleSizeError(
                f"a sample payload holds at least two float64 values, got {len(payload)} bytes"
            )
        values = np.frombuffer(payload, dtype=FLOAT).astype(np.float64)
        return cls(values[:-1], values[-1])

    def __eq__(self, other):
        if not isinstance(other, SyntheticSample):
            return NotImplemented
        return self.encode() == other.encode()

    __hash__ = None


def sample_bytes(dim: int) -> int:
    """Payload size of a sample of dimension `dim`."""
    return (dim + 1) * FLOAT.itemsize


def per_sample_loss_grad(theta: np.ndarray, sample: SyntheticSample) -> Tuple[float, np.ndarray]:
    """Squared error loss and its exact gradient 2 (theta . x - y) x.

    Raises:
        ValueError: If dim(x) != dim(theta)
    """
    if sample.x.shape != theta.shape:
        raise ValueError(
            f"sample has {sample.x.shape[0]} features, the model has {theta.shape[0]} parameters"
        )
    residual = float(np.dot(theta, sample.x)) - sample.y
    return residual * residual, (2.0 * residual) * sample.x


@dataclass(frozen=True, eq=False)
class BatchGradient:
    mean_grad: np.ndarray
    mean_loss: float


def batch_reduce(
    contributions: Iterable[Tuple[int, Tuple[float, np.ndarray]]],
) -> BatchGradient:
    """Average per-sample results keyed by global index.

    Contributions are sorted by index and summed left to right in float64, so
    any arrival order of the same batch gives a bit-identical result.

    Raises:
        ValueError: If there are no contributions
    """
    ordered = sorted(contributions, key=lambda item: item[0])
    if not ordered:
        raise ValueError("cannot reduce an empty batch")
    loss_total = 0.0
    grad_total = np.zeros_like(ordered[0][1][1], dtype=np.float64)
    for _, (loss, grad) in ordered:
        loss_total += loss
        grad_total = grad_total + grad
    count = len(ordered)
    return BatchGradient(grad_total / count, loss_total / count)


def sgd_step(state: ModelState, gradient: BatchGradient) -> ModelState:
    """theta_new = theta - eta * mean_grad.

    Raises:
        NumericError: If the gradient is not finite
        ValueError: If dimensions differ
    """
    if gradient.mean_grad.shape != state.theta.shape:
        raise ValueError(
            f"gradient has shape {gradient.mean_grad.shape}, parameters {state.theta.shape}"
        )
    if not np.all(np.isfinite(gradient.mean_grad)) or not np.isfinite(gradient.mean_loss):
        raise NumericError(f"non-finite gradient: {gradient.mean_grad}")
    return ModelState(state.theta - state.eta * gradient.mean_grad, state.eta)


@dataclass
class TrainingResult:
    state: ModelState
    loss_trace: List[float] = field(default_factory=list)

    @property
    def steps(self) -> int:
        return len(self.loss_trace)


def train_epochs(
    source: SampleSource,
    plan_source: Callable[[int], EpochPlan],
    config: FetchConfig,
    epochs: int,
    *,
    state: ModelState,
    monitor: Optional[FetchMonitor] = None,
) -> TrainingResult:
    """Run SGD over `epochs` epochs of batches from the fetch engine.

    Samples are decoded on the fetch workers as preprocessing. The loss trace
    holds each step's mean batch loss, evaluated before its update.

    Args:
        source: Dataset whose payloads are encoded SyntheticSamples
        plan_source: Returns the EpochPlan of a given epoch number
        config: Fetch engine configuration (ordered or unordered)
        epochs: Number of epochs; 0 leaves the state unchanged
        state: Initial parameters and learning rate
        monitor: Optional fetch instrumentation

    Returns:
        TrainingResult: Final state and per-step loss trace

    Raises:
        TrainingError: If a batch cannot be fetched or decoded
    """
    if epochs < 0:
        raise ValueError(f"epochs must be non-negative, got {epochs}")
    monitor = monitor if monitor is not None else FetchMonitor()
    result = TrainingResult(state)
    for epoch in range(epochs):
        plan = plan_source(epoch)
        with epoch_loader(source, plan, config, SyntheticSample.decode, monitor=monitor) as loader:
            while True:
                try:
                    batch = next(loader)
                except StopIteration:
                    break
                except BatchFetchError as e:
                    raise TrainingError(e.batch_ordinal, str(e.cause)) from e
                with monitor.timings.measure("consume"):
                    theta = result.state.theta
                    try:
                        gradient = batch_reduce(
                            (index, per_sample_loss_grad(theta, sample))
                            for index, sample in batch.samples
                        )
                    except ValueError as e:
                        raise TrainingError(batch.batch_ordinal, str(e)) from e
                    result.state = sgd_step(result.state, gradient)
                result.loss_trace.append(gradient.mean_loss)
        logger.info(
            "epoch %d: %d steps, last loss %.6g",
            epoch,
            len(plan),
            result.loss_trace[-1] if result.loss_trace else float("nan"),
        )
    return result


def make_linear_problem(
    n: int,
    dim: int,
    seed: int,
    noise: float = 0.01,
    sort_by_target: bool = False,
) -> Tuple[List[SyntheticSample], np.ndarray]:
    """Deterministic least-squares data y = x . w + noise.

    Returns:
        The samples and the generating weights `w`
    """
    rng = np.random.default_rng(seed)
    weights = rng.normal(size=dim)
    xs = rng.normal(size=(n, dim))
    ys = xs @ weights + noise * rng.normal(size=n)
    if sort_by_target:
        order = np.argsort(ys, kind="stable")
        xs, ys = xs[order], ys[order]
    return [SyntheticSample(x, y) for x, y in zip(xs, ys)], weights


def design_matrix(samples: Sequence[SyntheticSample]) -> Tuple[np.ndarray, np.ndarray]:
    """Stack samples into (X, y)."""
    return np.stack([s.x for s in samples]), np.array([s.y for s in samples])


def safe_learning_rate(samples: Sequence[SyntheticSample], fraction: float = 0.5) -> float:
    """`fraction` / L, where L = 2 lambda_max(X^T X / n) is the gradient's Lipschitz constant."""
    if not 0 < fraction < 1:
        raise ValueError(f"fraction must be in (0, 1), got {fraction}")
    xs, _ = design_matrix(samples)
    lipschitz = 2.0 * float(np.linalg.eigvalsh(xs.T @ xs / len(xs))[-1])
    return fraction / lipschitz


def least_squares_solution(samples: Sequence[SyntheticSample]) -> np.ndarray:
    """Minimizer of the mean squared error over `samples`."""
    xs, ys = design_matrix(samples)
    return np.linalg.lstsq(xs, ys, rcond=None)[0]


def lag1_autocorrelation(values: Sequence[float]) -> float:
    """Lag-1 sample autocorrelation; 0.0 for constant or too-short series."""
    series = np.asarray(values, dtype=np.float64)
    if series.size < 2:
        return 0.0
    centered = series - series.mean()
    denominator = float(np.dot(centered, centered))
    if denominator == 0.0:
        return 0.0
    return float(np.dot(centered[:-1], centered[1:])) / denominator
