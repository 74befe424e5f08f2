"""Tests for the least-squares SGD consumer."""

import random

import numpy as np
import pytest

from shuffle_loader.checksum import ChecksumKind
from shuffle_loader.dataset_format import open_indexable, write_indexable_dataset
from shuffle_loader.errors import NumericError, SampleSizeError, TrainingError
from shuffle_loader.fetch_engine import FetchConfig, FetchStrategy
from shuffle_loader.shuffle_sampler import ShuffleMode, ShuffleSpec, make_epoch_plan
from shuffle_loader.trainer_sim import (
    BatchGradient,
    ModelState,
    SyntheticSample,
    batch_reduce,
    lag1_autocorrelation,
    least_squares_solution,
    make_linear_problem,
    per_sample_loss_grad,
    safe_learning_rate,
    sample_bytes,
    sgd_step,
    train_epochs,
)


def _write_problem(path, samples):
    write_indexable_dataset(
        [s.encode() for s in samples], path, 256, checksum=ChecksumKind.BLAKE2B_64
    )


def _plans(n, batch_size, seed, mode=ShuffleMode.INDICES_MAPPING):
    return lambda epoch: make_epoch_plan(ShuffleSpec(mode, seed=seed, epoch=epoch), n, batch_size)


class TestSyntheticSample:
    """Payload encoding of training samples."""

    def test_encode_layout(self):
        """Test dim+1 little-endian float64 values, target last"""
        payload = SyntheticSample([1.0, 2.0], 3.0).encode()
        assert len(payload) == sample_bytes(2) == 24
        assert np.frombuffer(payload, dtype="<f8").tolist() == [1.0, 2.0, 3.0]

    def test_decode(self):
        """Test decoding an encoded sample"""
        sample = SyntheticSample([0.5, -1.25, 4.0], -2.0)
        assert SyntheticSample.decode(sample.encode()) == sample

    @pytest.mark.parametrize("size", [0, 8, 12, 20])
    def test_decode_rejects_bad_sizes(self, size):
        """Test that payloads that are not whole float64 pairs fail"""
        with pytest.raises(SampleSizeError):
            SyntheticSample.decode(bytes(size))


class TestGradient:
    """Loss, gradient, reduction and the update rule."""

    def test_hand_example(self):
        """Test residual 1 at theta=[1,2], x=[3,4], y=10"""
        loss, grad = per_sample_loss_grad(np.array([1.0, 2.0]), SyntheticSample([3.0, 4.0], 10.0))
        assert loss == 1.0
        assert grad.tolist() == [6.0, 8.0]

    def test_zero_residual(self):
        """Test that an exact fit has zero loss and gradient"""
        loss, grad = per_sample_loss_grad(np.array([2.0]), SyntheticSample([3.0], 6.0))
        assert loss == 0.0
        assert grad.tolist() == [0.0]

    def test_dimension_mismatch(self):
        """Test that mismatched dimensions raise ValueError"""
        with pytest.raises(ValueError):
            per_sample_loss_grad(np.zeros(3), SyntheticSample([1.0, 2.0], 0.0))

    def test_finite_differences(self):
        """Test 1000 random cases against central differences"""
        rng = np.random.default_rng(17)
        step = 1e-4
        for _ in range(1000):
            dim = int(rng.integers(1, 17))
            theta = rng.normal(size=dim)
            sample = SyntheticSample(rng.normal(size=dim), float(rng.normal()))
            _, grad = per_sample_loss_grad(theta, sample)
            numeric = np.empty(dim)
            for k in range(dim):
                offset = np.zeros(dim)
                offset[k] = step
                plus, _ = per_sample_loss_grad(theta + offset, sample)
                minus, _ = per_sample_loss_grad(theta - offset, sample)
                numeric[k] = (plus - minus) / (2 * step)
            error = np.abs(numeric - grad) / np.maximum(1.0, np.abs(grad))
            assert error.max() <= 1e-6

    def test_batch_reduce_mean(self):
        """Test the mean of two contributions"""
        result = batch_reduce(
            [(4, (1.0, np.array([2.0, 0.0]))), (1, (3.0, np.array([0.0, 4.0])))]
        )
        assert result.mean_loss == 2.0
        assert result.mean_grad.tolist() == [1.0, 2.0]

    def test_batch_reduce_order_invariant(self):
        """Test bit-identical results for every arrival order of a batch"""
        rng = np.random.default_rng(3)
        contributions = [(i, (float(rng.random()), rng.normal(size=8) * 1e3)) for i in range(64)]
        expected = batch_reduce(contributions)
        shuffler = random.Random(3)
        for _ in range(50):
            shuffled = list(contributions)
            shuffler.shuffle(shuffled)
            result = batch_reduce(shuffled)
            assert result.mean_grad.tobytes() == expected.mean_grad.tobytes()
            assert result.mean_loss == expected.mean_loss

    def test_batch_reduce_empty(self):
        """Test that an empty batch cannot be reduced"""
        with pytest.raises(ValueError):
            batch_reduce([])

    def test_sgd_step(self):
        """Test theta - eta * grad"""
        state = sgd_step(ModelState(np.array([1.0, 1.0]), 0.5), BatchGradient(np.array([2.0, -2.0]), 0.0))
        assert state.theta.tolist() == [0.0, 2.0]
        assert state.eta == 0.5

    def test_sgd_step_rejects_non_finite(self):
        """Test that a NaN gradient raises NumericError"""
        with pytest.raises(NumericError):
            sgd_step(ModelState.zeros(2, 0.1), BatchGradient(np.array([np.nan, 0.0]), 1.0))

    def test_sgd_step_rejects_shape_mismatch(self):
        """Test that a gradient of the wrong size raises ValueError"""
        with pytest.raises(ValueError):
            sgd_step(ModelState.zeros(2, 0.1), BatchGradient(np.zeros(3), 1.0))

    @pytest.mark.parametrize("eta", [0.0, -1.0, float("inf")])
    def test_invalid_learning_rate(self, eta):
        """Test that the learning rate must be finite and positive"""
        with pytest.raises(ValueError):
            ModelState.zeros(2, eta)

    def _full_batch(self, state, samples):
        return batch_reduce((i, per_sample_loss_grad(state.theta, s)) for i, s in enumerate(samples))

    def test_full_batch_descent(self):
        """Test that the loss strictly decreases in at least 95 of 100 full-batch steps"""
        samples, _ = make_linear_problem(500, 4, seed=5)
        state = ModelState.zeros(4, safe_learning_rate(samples, fraction=0.05))
        losses = []
        for _ in range(100):
            gradient = self._full_batch(state, samples)
            losses.append(gradient.mean_loss)
            state = sgd_step(state, gradient)
        losses.append(self._full_batch(state, samples).mean_loss)

        decreasing = sum(b < a for a, b in zip(losses, losses[1:]))
        assert len(losses) == 101
        assert decreasing >= 95
        assert losses[-1] < 0.5 * losses[0]

    def test_converges_to_least_squares(self):
        """Test that full-batch steps at a safe rate never increase the loss and reach the solution"""
        samples, _ = make_linear_problem(500, 4, seed=5)
        state = ModelState.zeros(4, safe_learning_rate(samples))
        losses = []
        for _ in range(60):
            gradient = self._full_batch(state, samples)
            losses.append(gradient.mean_loss)
            state = sgd_step(state, gradient)
        assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))
        assert losses[-1] < 0.1 * losses[0]
        np.testing.assert_allclose(state.theta, least_squares_solution(samples), atol=1e-2)


class TestTraining:
    """train_epochs over the fetch engine."""

    def test_zero_epochs(self, tmp_path):
        """Test that no epochs leave the state untouched"""
        samples, _ = make_linear_problem(100, 3, seed=0)
        path = tmp_path / "p.indexable"
        _write_problem(path, samples)
        state = ModelState.zeros(3, 0.01)
        with open_indexable(path) as handle:
            result = train_epochs(handle, _plans(100, 10, 0), FetchConfig(), 0, state=state)
        assert result.state is state
        assert result.steps == 0

    def test_negative_epochs(self, tmp_path):
        """Test that a negative epoch count is rejected"""
        with pytest.raises(ValueError):
            train_epochs(None, _plans(1, 1, 0), FetchConfig(), -1, state=ModelState.zeros(1, 0.1))

    def test_loss_trace_and_progress(self, tmp_path):
        """Test one trace entry per step and falling loss"""
        samples, _ = make_linear_problem(1000, 4, seed=2)
        path = tmp_path / "p.indexable"
        _write_problem(path, samples)
        state = ModelState.zeros(4, safe_learning_rate(samples))
        with open_indexable(path, cache_chunks=8) as handle:
            result = train_epochs(handle, _plans(1000, 32, 2), FetchConfig(), 2, state=state)
        assert result.steps == 2 * 32
        assert np.mean(result.loss_trace[-10:]) < 0.1 * np.mean(result.loss_trace[:5])

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_ordered_and_unordered_bit_identical(self, tmp_path, seed):
        """Test that the fetch strategy does not change a single bit of the result"""
        n, dim = 2000, 8
        samples, _ = make_linear_problem(n, dim, seed=seed)
        path = tmp_path / "p.indexable"
        _write_problem(path, samples)
        eta = safe_learning_rate(samples)
        results = []
        with open_indexable(path, cache_chunks=16) as handle:
            for strategy in (FetchStrategy.ORDERED, FetchStrategy.UNORDERED):
                config = FetchConfig(max_concurrent_fetches=16, strategy=strategy, prefetch_depth=2)
                results.append(
                    train_epochs(handle, _plans(n, 64, seed), config, 3, state=ModelState.zeros(dim, eta))
                )
        ordered, unordered = results
        assert ordered.state.theta.tobytes() == unordered.state.theta.tobytes()
        assert ordered.loss_trace == unordered.loss_trace

    def test_decode_failure_names_batch(self, tmp_path):
        """Test that an undecodable payload stops training at its batch"""
        path = tmp_path / "bad.indexable"
        write_indexable_dataset([bytes(12)] * 20, path, 5)
        with open_indexable(path) as handle:
            with pytest.raises(TrainingError) as exc_info:
                train_epochs(
                    handle, _plans(20, 4, 0), FetchConfig(), 1, state=ModelState.zeros(1, 0.1)
                )
        assert exc_info.value.batch_ordinal == 0

    def test_dimension_mismatch_names_batch(self, tmp_path):
        """Test that samples of the wrong dimension stop training"""
        samples, _ = make_linear_problem(20, 3, seed=0)
        path = tmp_path / "p.indexable"
        _write_problem(path, samples)
        with open_indexable(path) as handle:
            with pytest.raises(TrainingError, match="batch 0"):
                train_epochs(
                    handle, _plans(20, 4, 0), FetchConfig(), 1, state=ModelState.zeros(5, 0.1)
                )


class TestOrderingEffects:
    """Sample order shows up in the loss trace."""

    def test_lag1_autocorrelation_helper(self):
        """Test known series"""
        assert lag1_autocorrelation([1.0]) == 0.0
        assert lag1_autocorrelation([2.0, 2.0, 2.0]) == 0.0
        assert lag1_autocorrelation(list(range(100))) > 0.9
        assert lag1_autocorrelation([1.0, -1.0] * 50) < -0.9

    def test_sequential_sorted_data_is_correlated(self, tmp_path):
        """Test high lag-1 autocorrelation without shuffling and none with it"""
        n, dim = 2000, 4
        samples, _ = make_linear_problem(n, dim, seed=11, noise=0.1, sort_by_target=True)
        path = tmp_path / "sorted.indexable"
        _write_problem(path, samples)
        eta = safe_learning_rate(samples, fraction=1e-4)

        def trace(mode):
            with open_indexable(path, cache_chunks=8) as handle:
                result = train_epochs(
                    handle, _plans(n, 8, 7, mode), FetchConfig(), 1, state=ModelState.zeros(dim, eta)
                )
            return result.loss_trace

        assert lag1_autocorrelation(trace(ShuffleMode.SEQUENTIAL)) > 0.8
        assert abs(lag1_autocorrelation(trace(ShuffleMode.INDICES_MAPPING))) < 0.25


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(10))
def test_bit_identical_full_size(tmp_path, seed):
    """Test ordered vs unordered on 10000 samples, dim 8, 3 epochs: same weights and loss trace"""
    n, dim = 10_000, 8
    samples, _ = make_linear_problem(n, dim, seed=seed)
    path = tmp_path / "p.indexable"
    _write_problem(path, samples)
    eta = safe_learning_rate(samples)
    results = []
    with open_indexable(path, cache_chunks=64) as handle:
        for strategy in (FetchStrategy.ORDERED, FetchStrategy.UNORDERED):
            config = FetchConfig(max_concurrent_fetches=32, strategy=strategy)
            results.append(
                train_epochs(handle, _plans(n, 64, seed), config, 3, state=ModelState.zeros(dim, eta))
            )
    ordered, unordered = results
    assert ordered.state.theta.tobytes() == unordered.state.theta.tobytes()
    assert ordered.steps == 3 * 157
    assert ordered.loss_trace == unordered.loss_trace

