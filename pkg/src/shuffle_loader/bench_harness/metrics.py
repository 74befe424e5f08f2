"""Benchmark result rows: the CSV schema, JSON-lines mirror and aggregation.

Columns are fixed and written in `COLUMNS` order with a header row. `compare`
reads back every row this module writes.
"""

import csv
import json
import os
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Union

import numpy as np

from ..timing import STAGES

PathLike = Union[str, os.PathLike]


@dataclass
class MetricsRecord:
    """One measured repeat, or the mean/stddev over repeats.

    `label` is `<mode>/<strategy>`; `variant` is `end_to_end` or `loading_only`;
    `repeat` is the repeat number or `mean`/`stddev`. Stage columns hold
    seconds summed over worker threads and learners, so they may exceed
    `wall_time`.
    """

    label: str
    mode: str
    strategy: str
    variant: str
    repeat: str
    batch_size: int
    dataset_samples: int
    steps: int
    samples: int
    wall_time: float
    samples_per_second: float
    index_lookup: float = 0.0
    read: float = 0.0
    decode: float = 0.0
    preprocess: float = 0.0
    assemble: float = 0.0
    consume: float = 0.0
    bytes_read: int = 0
    peak_in_flight_fetches: int = 0
    peak_in_flight_batches: int = 0
    concurrency: int = 1
    prefetch_depth: int = 0
    workers: int = 1
    inject_latency_us: float = 0.0
    compute_us: float = 0.0
    open_mode: str = "footer"
    open_seconds: float = 0.0
    open_bytes: int = 0

    def config_key(self) -> tuple:
        """Everything that identifies a configuration apart from the label."""
        return (
            self.variant,
            self.repeat,
            self.batch_size,
            self.dataset_samples,
            self.workers,
            self.inject_latency_us,
            self.compute_us,
        )

    def stage_total(self) -> float:
        """Sum of per-stage seconds."""
        return sum(getattr(self, stage) for stage in STAGES)


COLUMNS: List[str] = [f.name for f in fields(MetricsRecord)]
_TYPES = {f.name: f.type for f in fields(MetricsRecord)}


def _parse(name: str, value: str):
    kind = _TYPES[name]
    if kind in (int, "int"):
        return int(float(value))
    if kind in (float, "float"):
        return float(value)
    return value


def append_csv(path: PathLike, records: Iterable[MetricsRecord]) -> None:
    """Append rows to `path`, writing the header if the file is new or empty."""
    path = Path(path)
    new_file = not path.exists() or path.stat().st_size == 0
    with open(path, "a", newline="") as out:
        writer = csv.DictWriter(out, fieldnames=COLUMNS)
        if new_file:
            writer.writeheader()
        for record in records:
            writer.writerow(asdict(record))


def read_csv(path: PathLike) -> List[MetricsRecord]:
    """Read every row of a metrics CSV.

    Raises:
        ValueError: If the header does not match `COLUMNS`
    """
    with open(path, newline="") as source:
        reader = csv.DictReader(source)
        if reader.fieldnames != COLUMNS:
            raise ValueError(
                f"{path} is not a metrics file.\n"
                f"  Expected columns: {', '.join(COLUMNS)}\n"
                f"  Found: {', '.join(reader.fieldnames or [])}"
            )
        return [
            MetricsRecord(**{name: _parse(name, row[name]) for name in COLUMNS})
            for row in reader
        ]


def append_jsonl(path: PathLike, records: Iterable[MetricsRecord]) -> None:
    """Append one JSON object per record."""
    with open(path, "a") as out:
        for record in records:
            out.write(json.dumps(asdict(record)) + "\n")


def read_jsonl(path: PathLike) -> List[MetricsRecord]:
    """Read records written by `append_jsonl`."""
    with open(path) as source:
        return [MetricsRecord(**json.loads(line)) for line in source if line.strip()]


_NUMERIC = [name for name in COLUMNS if _TYPES[name] in (int, float, "int", "float")]
# Copied from the first repeat, never averaged.
_CONFIG_COLUMNS = (
    "batch_size",
    "dataset_samples",
    "steps",
    "concurrency",
    "prefetch_depth",
    "workers",
    "inject_latency_us",
    "compute_us",
)


def aggregate(records: Sequence[MetricsRecord]) -> List[MetricsRecord]:
    """Mean and standard deviation rows over the repeats of one configuration.

    Numeric columns are averaged (population standard deviation); descriptive
    columns are copied from the first record.

    Raises:
        ValueError: If `records` is empty
    """
    if not records:
        raise ValueError("cannot aggregate zero repeats")
    first = records[0]
    mean: Dict[str, float] = {}
    stddev: Dict[str, float] = {}
    for name in _NUMERIC:
        values = np.array([getattr(r, name) for r in records], dtype=np.float64)
        mean[name] = float(values.mean())
        stddev[name] = float(values.std())
    for name in _CONFIG_COLUMNS:
        mean[name] = getattr(first, name)
        stddev[name] = getattr(first, name)
    return [replace(first, repeat="mean", **mean), replace(first, repeat="stddev", **stddev)]
