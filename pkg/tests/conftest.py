import random

import pytest

from shuffle_loader.config import BenchSettings, LoaderSettings
from shuffle_loader.dataset_format import write_indexable_dataset, write_stream_dataset


@pytest.fixture(autouse=True)
def _clean_settings(monkeypatch):
    """Isolate tests from SHUFFLE_LOADER_* variables and command line leftovers."""
    import os

    for name in list(os.environ):
        if name.startswith("SHUFFLE_LOADER_"):
            monkeypatch.delenv(name)
    yield
    BenchSettings.clear_command_line()
    LoaderSettings.clear_command_line()


def make_fixed_samples(n, size=16, seed=0):
    rng = random.Random(seed)
    return [bytes(rng.getrandbits(8) for _ in range(size)) for _ in range(n)]


def make_variable_samples(n, max_size=40, seed=0):
    rng = random.Random(seed)
    return [bytes(rng.getrandbits(8) for _ in range(rng.randrange(max_size))) for _ in range(n)]


@pytest.fixture
def fixed_samples():
    return make_fixed_samples(1000)


@pytest.fixture
def variable_samples():
    return make_variable_samples(500)


@pytest.fixture
def indexable_file(tmp_path, fixed_samples):
    """1000 fixed 16-byte samples, 64 per chunk."""
    path = tmp_path / "data.indexable"
    write_indexable_dataset(fixed_samples, path, 64)
    return path


@pytest.fixture
def stream_file(tmp_path, fixed_samples):
    """The same samples as `indexable_file`, without the footer."""
    path = tmp_path / "data.stream"
    write_stream_dataset(fixed_samples, path, 64)
    return path
