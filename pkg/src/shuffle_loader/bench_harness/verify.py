"""Dataset verification: checksum scan, footer audit and sibling comparison."""

import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Union

from ..dataset_format import FileTreeDataset, is_indexable, iterate_stream, open_indexable
from ..dataset_format.layout import HEADER_SIZE, RECORD_HEADER, ChunkIndexEntry, decode_chunk
from ..dataset_format.reader import iter_chunk_records, read_stream_header
from ..errors import CorruptChunkError, DatasetFormatError, VerificationError

logger = logging.getLogger(__name__)

PathLike = Union[str, os.PathLike]

STREAM_SUFFIX = ".stream"
INDEXABLE_SUFFIX = ".indexable"


@dataclass
class VerificationReport:
    path: Path
    kind: str
    chunks_checked: int = 0
    samples_checked: int = 0
    sibling: Optional[Path] = None
    failure: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.failure is None

    def summary(self) -> str:
        """One line for the terminal."""
        status = "PASS" if self.ok else f"FAIL: {self.failure}"
        sibling = f", compared with {self.sibling}" if self.sibling else ""
        return (
            f"{self.path} ({self.kind}): {self.chunks_checked} chunks, "
            f"{self.samples_checked} samples{sibling}: {status}"
        )

    def raise_for_failure(self) -> None:
        """Raise VerificationError if verification failed."""
        if not self.ok:
            raise VerificationError(f"{self.path}: {self.failure}")


def find_sibling(path: PathLike) -> Optional[Path]:
    """The same dataset in the other layout: `x.stream` <-> `x.indexable`, if it exists."""
    path = Path(path)
    swaps = {STREAM_SUFFIX: INDEXABLE_SUFFIX, INDEXABLE_SUFFIX: STREAM_SUFFIX}
    if path.suffix not in swaps:
        return None
    candidate = path.with_suffix(swaps[path.suffix])
    return candidate if candidate.exists() else None


def _verify_tree(path: Path) -> VerificationReport:
    report = VerificationReport(path, "tree")
    try:
        dataset = FileTreeDataset(path)
        for index in range(len(dataset)):
            dataset.get_sample(index)
            report.samples_checked += 1
    except (DatasetFormatError, OSError) as e:
        report.failure = f"sample {report.samples_checked}: {e}"
    return report


def _scan_records(path: Path, report: VerificationReport) -> List[ChunkIndexEntry]:
    """Verify every record in file order and rebuild the chunk index from them."""
    entries: List[ChunkIndexEntry] = []
    with open(path, "rb") as source:
        schema = read_stream_header(source)
        first = 0
        for record in iter_chunk_records(source, schema):
            count = schema.chunk_sample_count(record.ordinal)
            try:
                decode_chunk(record.payload, count, schema.sample_encoding, schema.fixed_sample_bytes)
            except ValueError as e:
                raise CorruptChunkError(record.ordinal, str(e)) from e
            entries.append(
                ChunkIndexEntry(
                    record.ordinal,
                    record.offset,
                    RECORD_HEADER.size + len(record.payload),
                    count,
                    first,
                    record.checksum,
                )
            )
            first += count
            report.chunks_checked += 1
            report.samples_checked += count
    return entries


def _audit_footer(path: Path, scanned: List[ChunkIndexEntry], report: VerificationReport) -> None:
    """Footer entries must match the records a scan finds."""
    with open_indexable(path) as handle:
        for found, stored in zip(scanned, handle.manifest.chunk_index):
            if found != stored:
                report.failure = (
                    f"footer entry of chunk {stored.chunk_ordinal} does not match its record: "
                    f"footer {stored}, record {found}"
                )
                return


def _compare_sibling(path: Path, sibling: Path, report: VerificationReport) -> None:
    indexable, stream = (path, sibling) if is_indexable(path) else (sibling, path)
    with open_indexable(indexable, cache_chunks=2) as handle:
        position = -1
        for position, record in enumerate(iterate_stream(stream)):
            if position >= len(handle):
                report.failure = f"{stream} has more samples than {indexable} ({len(handle)})"
                return
            if handle.get_sample(position).payload != record.payload:
                report.failure = f"sample {position} differs between {stream} and {indexable}"
                return
        if position + 1 != len(handle):
            report.failure = f"{stream} has {position + 1} samples, {indexable} has {len(handle)}"


def verify_dataset(path: PathLike, sibling: Optional[PathLike] = None) -> VerificationReport:
    """Check a dataset and report the first problem found.

    A forward scan checks every chunk checksum, every sample boundary and the
    end marker. A file that is indexable, is named `.indexable`, or carries
    bytes after its end marker must have an intact footer that agrees with
    the records. If a sibling in the other layout is given or found, random
    access on the indexable one must match stream position for every index.

    Args:
        path: The dataset file or sample tree directory
        sibling: The same dataset in the other layout; auto-detected when None

    Returns:
        VerificationReport: `ok` is False with a message naming the first failing chunk or sample
    """
    path = Path(path)
    if path.is_dir():
        return _verify_tree(path)

    report = VerificationReport(path, "stream")
    try:
        if is_indexable(path):
            report.kind = "indexable"
        entries = _scan_records(path, report)
        data_end = entries[-1].byte_offset + entries[-1].byte_length if entries else HEADER_SIZE
        has_trailing_bytes = path.stat().st_size > data_end + RECORD_HEADER.size
        if report.kind == "indexable" or has_trailing_bytes or path.suffix == INDEXABLE_SUFFIX:
            _audit_footer(path, entries, report)
        if report.ok:
            sibling = Path(sibling) if sibling is not None else find_sibling(path)
            if sibling is not None:
                report.sibling = sibling
                _compare_sibling(path, sibling, report)
    except DatasetFormatError as e:
        report.failure = str(e)
    except OSError as e:
        report.failure = f"cannot read: {e}"
    logger.info(report.summary())
    return report
