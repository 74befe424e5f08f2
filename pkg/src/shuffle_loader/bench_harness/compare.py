"""Speedup tables from benchmark metrics."""

import csv
import logging
import os
from dataclasses import asdict, dataclass, field
from typing import List, Sequence, Tuple, Union

from ..errors import PairingError
from .metrics import MetricsRecord

logger = logging.getLogger(__name__)

SPEEDUP_COLUMNS = [
    "variant",
    "batch_size",
    "dataset_samples",
    "workers",
    "inject_latency_us",
    "compute_us",
    "baseline_samples_per_second",
    "candidate_samples_per_second",
    "speedup",
]


@dataclass
class SpeedupRow:
    variant: str
    batch_size: int
    dataset_samples: int
    workers: int
    inject_latency_us: float
    compute_us: float
    baseline_samples_per_second: float
    candidate_samples_per_second: float
    speedup: float


@dataclass
class Comparison:
    baseline: str
    candidate: str
    rows: List[SpeedupRow] = field(default_factory=list)
    unmatched_baseline: List[tuple] = field(default_factory=list)
    unmatched_candidate: List[tuple] = field(default_factory=list)

    def table(self) -> str:
        """Plain text rendering, one line per paired configuration."""
        header = (
            f"{'variant':<13}{'batch':>7}{'samples':>10}{'workers':>8}{'lat_us':>9}"
            f"{'comp_us':>9}{'baseline/s':>13}{'candidate/s':>13}{'speedup':>9}"
        )
        lines = [f"{self.candidate} vs {self.baseline}", header]
        for r in self.rows:
            lines.append(
                f"{r.variant:<13}{r.batch_size:>7}{r.dataset_samples:>10}{r.workers:>8}"
                f"{r.inject_latency_us:>9.0f}{r.compute_us:>9.0f}"
                f"{r.baseline_samples_per_second:>13.1f}{r.candidate_samples_per_second:>13.1f}"
                f"{r.speedup:>8.2f}x"
            )
        for key in self.unmatched_baseline:
            lines.append(f"unmatched {self.baseline}: {_describe(key)}")
        for key in self.unmatched_candidate:
            lines.append(f"unmatched {self.candidate}: {_describe(key)}")
        return "\n".join(lines)

    def write_csv(self, path: Union[str, os.PathLike]) -> None:
        """Write the paired rows with a header."""
        with open(path, "w", newline="") as out:
            writer = csv.DictWriter(out, fieldnames=SPEEDUP_COLUMNS)
            writer.writeheader()
            for row in self.rows:
                writer.writerow(asdict(row))


def _describe(key: tuple) -> str:
    variant, repeat, batch, samples, workers, latency, compute = key
    return (
        f"variant={variant} repeat={repeat} batch_size={batch} dataset_samples={samples} "
        f"workers={workers} inject_latency_us={latency:g} compute_us={compute:g}"
    )


def _select(records: Sequence[MetricsRecord], label: str) -> List[MetricsRecord]:
    """Rows of `label`, preferring the aggregated mean rows when there are any."""
    rows = [r for r in records if r.label == label]
    means = [r for r in rows if r.repeat == "mean"]
    if means:
        return means
    return [r for r in rows if r.repeat != "stddev"]


def compare(records: Sequence[MetricsRecord], baseline: str, candidate: str) -> Comparison:
    """Pair baseline and candidate rows by configuration and compute speedups.

    speedup = candidate samples_per_second / baseline samples_per_second.

    Raises:
        PairingError: If no configuration appears under both labels
    """
    base_rows = {r.config_key(): r for r in _select(records, baseline)}
    cand_rows = {r.config_key(): r for r in _select(records, candidate)}
    result = Comparison(baseline, candidate)
    for key, base in base_rows.items():
        cand = cand_rows.get(key)
        if cand is None:
            result.unmatched_baseline.append(key)
            continue
        result.rows.append(
            SpeedupRow(
                variant=base.variant,
                batch_size=base.batch_size,
                dataset_samples=base.dataset_samples,
                workers=base.workers,
                inject_latency_us=base.inject_latency_us,
                compute_us=base.compute_us,
                baseline_samples_per_second=base.samples_per_second,
                candidate_samples_per_second=cand.samples_per_second,
                speedup=cand.samples_per_second / base.samples_per_second,
            )
        )
    result.unmatched_candidate = [key for key in cand_rows if key not in base_rows]

    unmatched: List[Tuple[str, tuple]] = [(baseline, k) for k in result.unmatched_baseline] + [
        (candidate, k) for k in result.unmatched_candidate
    ]
    if not result.rows:
        listing = "\n".join(f"  {label}: {_describe(key)}" for label, key in unmatched)
        raise PairingError(
            f"no configuration has rows for both {baseline!r} and {candidate!r}.\n"
            f"Unmatched configurations:\n{listing or '  (no rows for either label)'}"
        )
    for label, key in unmatched:
        logger.warning("unmatched %s configuration: %s", label, _describe(key))
    return result
