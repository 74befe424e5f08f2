"""Synthetic datasets, benchmark runs, verification and speedup comparison."""

from .compare import Comparison as Comparison
from .compare import compare as compare
from .metrics import COLUMNS as COLUMNS
from .metrics import MetricsRecord as MetricsRecord
from .runner import BenchConfig as BenchConfig
from .runner import run_bench as run_bench
from .synth import DatasetKind as DatasetKind
from .synth import OpenMode as OpenMode
from .verify import VerificationReport as VerificationReport
from .verify import verify_dataset as verify_dataset
