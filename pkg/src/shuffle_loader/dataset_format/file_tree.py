"""Map-style dataset stored as one file per sample.

Directories of individual sample files (the usual layout of image datasets)
are indexable as they are: sample `i` lives at `<root>/<shard>/<i>.bin`, and
fetching it opens and reads only that file. No conversion step is needed.
"""

import json
import logging
import os
import threading
import time
from pathlib import Path
from typing import Iterable, Optional, Union

from ..errors import DatasetFormatError, SampleIndexError
from ..timing import StageTimes
from .layout import SampleRecord

logger = logging.getLogger(__name__)

MANIFEST_NAME = "samples.json"
FILES_PER_DIRECTORY = 1000


def _sample_path(root: Path, global_index: int) -> Path:
    return root / f"{global_index // FILES_PER_DIRECTORY:06d}" / f"{global_index:010d}.bin"


def write_file_tree(samples: Iterable[bytes], root: Union[str, os.PathLike]) -> int:
    """Write each sample to its own file under `root`; return the sample count."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    count = 0
    for count, payload in enumerate(samples, start=1):
        path = _sample_path(root, count - 1)
        path.parent.mkdir(exist_ok=True)
        path.write_bytes(payload)
    (root / MANIFEST_NAME).write_text(json.dumps({"total_samples": count}))
    logger.info("wrote %d sample files under %s", count, root)
    return count


class FileTreeDataset:
    """Sample source over a directory written by `write_file_tree`.

    Safe for concurrent use: every fetch opens its own file.
    """

    def __init__(self, root: Union[str, os.PathLike]):
        self.root = Path(root)
        try:
            meta = json.loads((self.root / MANIFEST_NAME).read_text())
            self._total = int(meta["total_samples"])
        except (OSError, ValueError, KeyError) as e:
            raise DatasetFormatError(f"{self.root} is not a sample tree: {e}") from e
        self.bytes_read = 0
        self._counter_lock = threading.Lock()

    def __len__(self) -> int:
        return self._total

    def get_sample(
        self,
        global_index: int,
        *,
        read_latency: float = 0.0,
        timings: Optional[StageTimes] = None,
    ) -> SampleRecord:
        """Read the file of sample `global_index`."""
        if not 0 <= global_index < self._total:
            raise SampleIndexError(f"sample index {global_index} out of range [0, {self._total})")
        start = time.perf_counter()
        if read_latency > 0:
            time.sleep(read_latency)
        payload = _sample_path(self.root, global_index).read_bytes()
        if timings is not None:
            timings.add("read", time.perf_counter() - start)
        with self._counter_lock:
            self.bytes_read += len(payload)
        return SampleRecord(global_index, payload)

    def close(self) -> None:
        """Nothing to release; present for symmetry with DatasetHandle."""

    def drop_caches(self) -> bool:
        """Page cache eviction is not implemented for sample trees."""
        return False
