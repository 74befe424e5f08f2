import logging
import os
import threading
import time
from collections import OrderedDict
from pathlib import Path
from typing import BinaryIO, Iterator, List, NamedTuple, Optional, Tuple, Union

from ..checksum import ChecksumKind
from ..errors import (
    CorruptChunkError,
    DatasetFormatError,
    NoFooterIndexError,
    SampleIndexError,
    StreamIterationError,
    TruncatedFileError,
    UnsupportedVersionError,
)
from ..timing import StageTimes
from .layout import (
    FORMAT_VERSION,
    HEADER_SIZE,
    INDEX_ENTRY,
    MAGIC,
    PREAMBLE,
    RECORD_HEADER,
    SCHEMA,
    TRAILER,
    TRAILING_MAGIC,
    ChunkIndexEntry,
    DatasetManifest,
    SampleEncoding,
    SampleRecord,
    SchemaDescriptor,
    decode_chunk,
    decode_sample_at,
)

logger = logging.getLogger(__name__)

PathLike = Union[str, os.PathLike]


def parse_header(header: bytes) -> SchemaDescriptor:
    """Decode magic, version and schema block.

    Raises:
        DatasetFormatError: If the magic is wrong
        UnsupportedVersionError: If the version is not understood
        TruncatedFileError: If fewer than HEADER_SIZE bytes are given
    """
    if len(header) < HEADER_SIZE:
        raise TruncatedFileError(
            f"file is {len(header)} bytes, shorter than the {HEADER_SIZE}-byte header"
        )
    magic, version = PREAMBLE.unpack_from(header, 0)
    if magic != MAGIC:
        raise DatasetFormatError(f"not a dataset file: leading magic is {magic!r}, expected {MAGIC!r}")
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(
            f"format version {version} is not supported; this reader understands "
            f"version {FORMAT_VERSION}"
        )
    encoding, checksum_kind, fixed_bytes, per_chunk, total_samples, total_chunks = (
        SCHEMA.unpack_from(header, PREAMBLE.size)
    )
    try:
        return SchemaDescriptor(
            format_version=version,
            sample_encoding=SampleEncoding(encoding),
            fixed_sample_bytes=fixed_bytes,
            samples_per_chunk=per_chunk,
            total_samples=total_samples,
            total_chunks=total_chunks,
            checksum_kind=ChecksumKind(checksum_kind),
        )
    except ValueError as e:
        raise DatasetFormatError(f"invalid schema block: {e}") from e


class PositionalFile:
    """Read-only file accessed by offset only; no shared cursor.

    Uses os.pread where the platform has it. Elsewhere a lock serializes the
    seek and read pair.
    """

    def __init__(self, path: PathLike):
        self.path = Path(path)
        self._fd = os.open(self.path, os.O_RDONLY | getattr(os, "O_BINARY", 0))
        self.size = os.fstat(self._fd).st_size
        self._lock = None if hasattr(os, "pread") else threading.Lock()

    def read_at(self, offset: int, length: int) -> bytes:
        """Read up to `length` bytes at `offset`; shorter only at end of file."""
        if self._lock is None:
            parts = []
            remaining = length
            while remaining > 0:
                part = os.pread(self._fd, remaining, offset)
                if not part:
                    break
                parts.append(part)
                offset += len(part)
                remaining -= len(part)
            return b"".join(parts)
        with self._lock:
            os.lseek(self._fd, offset, os.SEEK_SET)
            return os.read(self._fd, length)

    def drop_page_cache(self) -> bool:
        """Ask the OS to evict this file from its page cache; False where unsupported."""
        if not hasattr(os, "posix_fadvise"):
            return False
        os.posix_fadvise(self._fd, 0, 0, os.POSIX_FADV_DONTNEED)
        return True

    def close(self) -> None:
        """Close the descriptor; safe to call twice."""
        if self._fd >= 0:
            os.close(self._fd)
            self._fd = -1


class DatasetHandle:
    """Random access to the samples of an opened dataset file.

    A handle may be shared by any number of threads: every read is positional
    and the optional chunk cache is guarded by a lock. `bytes_read` counts all
    payload-path reads; `open_bytes` counts what opening cost.
    """

    def __init__(
        self,
        file: PositionalFile,
        manifest: DatasetManifest,
        open_bytes: int,
        open_seconds: float = 0.0,
        cache_chunks: int = 0,
    ):
        self._file = file
        self.manifest = manifest
        self.open_bytes = open_bytes
        self.open_seconds = open_seconds
        self._bytes_read = 0
        self._counter_lock = threading.Lock()
        self._cache_size = cache_chunks
        self._cache: "OrderedDict[int, bytes]" = OrderedDict()
        self._cache_lock = threading.Lock()

    @property
    def path(self) -> Path:
        """Path of the underlying file."""
        return self._file.path

    @property
    def schema(self) -> SchemaDescriptor:
        """Schema of the dataset."""
        return self.manifest.schema

    @property
    def bytes_read(self) -> int:
        """Bytes read by chunk and sample lookups since open."""
        return self._bytes_read

    def __len__(self) -> int:
        return self.manifest.schema.total_samples

    def __enter__(self) -> "DatasetHandle":
        return self

    def __exit__(self, *_: object) -> None:
        self.close()

    def close(self) -> None:
        """Release the file descriptor."""
        self._file.close()

    def drop_caches(self) -> bool:
        """Empty the chunk cache and evict the file from the OS page cache.

        Returns False if the platform has no page cache hint.
        """
        with self._cache_lock:
            self._cache.clear()
        return self._file.drop_page_cache()

    def _cached(self, ordinal: int) -> Optional[bytes]:
        if not self._cache_size:
            return None
        with self._cache_lock:
            payload = self._cache.get(ordinal)
            if payload is not None:
                self._cache.move_to_end(ordinal)
            return payload

    def _remember(self, ordinal: int, payload: bytes) -> None:
        if not self._cache_size:
            return
        with self._cache_lock:
            self._cache[ordinal] = payload
            self._cache.move_to_end(ordinal)
            while len(self._cache) > self._cache_size:
                self._cache.popitem(last=False)

    def _chunk_payload(
        self, entry: ChunkIndexEntry, read_latency: float, timings: Optional[StageTimes]
    ) -> bytes:
        payload = self._cached(entry.chunk_ordinal)
        if payload is not None:
            return payload

        start = time.perf_counter()
        if read_latency > 0:
            time.sleep(read_latency)
        record = self._file.read_at(entry.byte_offset, entry.byte_length)
        read_done = time.perf_counter()
        with self._counter_lock:
            self._bytes_read += len(record)

        if len(record) != entry.byte_length:
            raise CorruptChunkError(
                entry.chunk_ordinal,
                f"file ends after {len(record)} of {entry.byte_length} bytes",
            )
        length, stored_checksum = RECORD_HEADER.unpack_from(record, 0)
        if length != entry.payload_length:
            raise CorruptChunkError(
                entry.chunk_ordinal,
                f"record declares {length} payload bytes, index says {entry.payload_length}",
            )
        payload = record[RECORD_HEADER.size :]
        actual = self.schema.checksum_kind.compute(payload)
        if actual != entry.checksum or actual != stored_checksum:
            raise CorruptChunkError(
                entry.chunk_ordinal,
                f"checksum mismatch: computed {actual:#018x}, index {entry.checksum:#018x}, "
                f"record {stored_checksum:#018x}",
            )
        if timings is not None:
            timings.add("read", read_done - start)
            timings.add("decode", time.perf_counter() - read_done)
        self._remember(entry.chunk_ordinal, payload)
        return payload

    def get_chunk(
        self,
        chunk_ordinal: int,
        *,
        read_latency: float = 0.0,
        timings: Optional[StageTimes] = None,
    ) -> List[SampleRecord]:
        """Read, verify and decode one chunk.

        Args:
            chunk_ordinal: Position of the chunk in the file
            read_latency: Seconds of injected storage latency for this read
            timings: Optional stage accounting

        Returns:
            List[SampleRecord]: Exactly `sample_count` records

        Raises:
            SampleIndexError: If the ordinal is out of range
            CorruptChunkError: If the checksum or length does not match
        """
        if not 0 <= chunk_ordinal < self.schema.total_chunks:
            raise SampleIndexError(
                f"chunk ordinal {chunk_ordinal} out of range [0, {self.schema.total_chunks})"
            )
        entry = self.manifest.chunk_index[chunk_ordinal]
        payload = self._chunk_payload(entry, read_latency, timings)
        try:
            samples = decode_chunk(
                payload, entry.sample_count, self.schema.sample_encoding, self.schema.fixed_sample_bytes
            )
        except ValueError as e:
            raise CorruptChunkError(chunk_ordinal, str(e)) from e
        first = entry.first_global_index
        return [SampleRecord(first + k, sample) for k, sample in enumerate(samples)]

    def get_sample(
        self,
        global_index: int,
        *,
        read_latency: float = 0.0,
        timings: Optional[StageTimes] = None,
    ) -> SampleRecord:
        """Fetch one sample by global index.

        The containing chunk is found by binary search over the chunk index,
        read whole with a positional read, verified, and only the requested
        sample is decoded.

        Raises:
            SampleIndexError: If the index is out of range
            CorruptChunkError: If the chunk fails verification
        """
        if not 0 <= global_index < self.schema.total_samples:
            raise SampleIndexError(
                f"sample index {global_index} out of range [0, {self.schema.total_samples})"
            )
        start = time.perf_counter()
        ordinal, offset = self.manifest.locate(global_index)
        entry = self.manifest.chunk_index[ordinal]
        if timings is not None:
            timings.add("index_lookup", time.perf_counter() - start)
        payload = self._chunk_payload(entry, read_latency, timings)
        decode_start = time.perf_counter()
        sample = decode_sample_at(
            payload, offset, self.schema.sample_encoding, self.schema.fixed_sample_bytes
        )
        if timings is not None:
            timings.add("decode", time.perf_counter() - decode_start)
        return SampleRecord(global_index, sample)


class _CountingReader:
    def __init__(self, file: PositionalFile):
        self.file = file
        self.bytes_read = 0

    def read_at(self, offset: int, length: int) -> bytes:
        data = self.file.read_at(offset, length)
        self.bytes_read += len(data)
        return data


def open_indexable(path: PathLike, *, cache_chunks: int = 0) -> DatasetHandle:
    """Open an indexable file reading only its header and footer.

    Args:
        path: The dataset file
        cache_chunks: Size of the per-handle chunk cache (0 disables it)

    Returns:
        DatasetHandle: A handle sharing one descriptor across threads

    Raises:
        NoFooterIndexError: If the file has no footer (stream file, truncated footer)
        UnsupportedVersionError: If the format version is not understood
        DatasetFormatError: For any other layout violation
    """
    start = time.perf_counter()
    file = PositionalFile(path)
    try:
        reader = _CountingReader(file)
        schema = parse_header(reader.read_at(0, HEADER_SIZE))
        minimum = HEADER_SIZE + RECORD_HEADER.size + TRAILER.size
        if file.size < minimum:
            raise NoFooterIndexError(f"no footer index: {path} is only {file.size} bytes")
        footer_length, trailing = TRAILER.unpack(reader.read_at(file.size - TRAILER.size, TRAILER.size))
        if trailing != TRAILING_MAGIC:
            raise NoFooterIndexError(
                f"no footer index in {path}: trailing bytes are not {TRAILING_MAGIC!r}. "
                "Stream files must be converted first (shuffle-loader convert)"
            )
        expected_length = schema.total_chunks * INDEX_ENTRY.size
        footer_start = file.size - TRAILER.size - footer_length
        if footer_length != expected_length or footer_start < HEADER_SIZE + RECORD_HEADER.size:
            raise TruncatedFileError(
                f"footer of {path} is {footer_length} bytes, {schema.total_chunks} chunks "
                f"need {expected_length}"
            )
        footer = reader.read_at(footer_start, footer_length)
        entries = [
            ChunkIndexEntry.unpack_from(footer, k * INDEX_ENTRY.size)
            for k in range(schema.total_chunks)
        ]
        manifest = DatasetManifest(schema, entries)
        manifest.validate()
        data_end = entries[-1].byte_offset + entries[-1].byte_length if entries else HEADER_SIZE
        if data_end + RECORD_HEADER.size != footer_start:
            raise TruncatedFileError(
                f"chunk records end at {data_end}, footer starts at {footer_start}"
            )
    except BaseException:
        file.close()
        raise
    seconds = time.perf_counter() - start
    logger.debug(
        "opened %s: %d chunks, %d bytes read in %.6fs", path, schema.total_chunks, reader.bytes_read, seconds
    )
    return DatasetHandle(file, manifest, reader.bytes_read, seconds, cache_chunks)


def open_stream_scanned(path: PathLike, *, cache_chunks: int = 0) -> DatasetHandle:
    """Open a stream (or indexable) file by scanning every chunk to build its index.

    This is the linear-time initialization the footer index avoids: every
    record is read and verified before the first sample can be served.

    Raises:
        StreamIterationError: If a record is truncated or the end marker is missing
        CorruptChunkError: If a chunk fails its checksum
    """
    start = time.perf_counter()
    file = PositionalFile(path)
    try:
        reader = _CountingReader(file)
        schema = parse_header(reader.read_at(0, HEADER_SIZE))
        entries = []
        offset = HEADER_SIZE
        first = 0
        for ordinal in range(schema.total_chunks):
            length, checksum, payload = _read_record_at(reader, offset, ordinal)
            if not length:
                raise StreamIterationError(
                    offset, f"end marker after {ordinal} of {schema.total_chunks} chunks", ordinal
                )
            if schema.checksum_kind.compute(payload) != checksum:
                raise CorruptChunkError(ordinal, "checksum mismatch")
            count = schema.chunk_sample_count(ordinal)
            entries.append(
                ChunkIndexEntry(ordinal, offset, RECORD_HEADER.size + length, count, first, checksum)
            )
            offset += RECORD_HEADER.size + length
            first += count
        end_length, _, _ = _read_record_at(reader, offset, schema.total_chunks)
        if end_length:
            raise StreamIterationError(offset, "expected the end marker", schema.total_chunks)
        manifest = DatasetManifest(schema, entries)
        manifest.validate()
    except BaseException:
        file.close()
        raise
    seconds = time.perf_counter() - start
    logger.debug("scanned %s: %d chunks, %d bytes read in %.6fs", path, schema.total_chunks, reader.bytes_read, seconds)
    return DatasetHandle(file, manifest, reader.bytes_read, seconds, cache_chunks)


def _read_record_at(reader: _CountingReader, offset: int, ordinal: int) -> Tuple[int, int, bytes]:
    header = reader.read_at(offset, RECORD_HEADER.size)
    if len(header) < RECORD_HEADER.size:
        raise StreamIterationError(offset, "record header truncated (missing end marker?)", ordinal)
    length, checksum = RECORD_HEADER.unpack(header)
    payload = reader.read_at(offset + RECORD_HEADER.size, length) if length else b""
    if len(payload) < length:
        raise StreamIterationError(
            offset, f"payload truncated after {len(payload)} of {length} bytes", ordinal
        )
    return length, checksum, payload


class ChunkRecord(NamedTuple):
    ordinal: int
    offset: int
    checksum: int
    payload: bytes


def read_stream_header(source: BinaryIO) -> SchemaDescriptor:
    """Read and decode the header from the current position of `source`."""
    return parse_header(source.read(HEADER_SIZE))


def iter_chunk_records(
    source: BinaryIO, schema: SchemaDescriptor, verify: bool = True
) -> Iterator[ChunkRecord]:
    """Yield chunk records in file order from a sequential reader.

    Positioned just after the header, reads `total_chunks` records and then
    requires the end marker. Holds one chunk payload at a time.

    Raises:
        StreamIterationError: On a truncated record or missing end marker
        CorruptChunkError: If `verify` and a checksum does not match
    """
    offset = HEADER_SIZE
    for ordinal in range(schema.total_chunks + 1):
        header = source.read(RECORD_HEADER.size)
        if len(header) < RECORD_HEADER.size:
            raise StreamIterationError(
                offset, "record header truncated (missing end marker?)", ordinal
            )
        length, checksum = RECORD_HEADER.unpack(header)
        if ordinal == schema.total_chunks:
            if length or checksum:
                raise StreamIterationError(offset, "expected the end marker", ordinal)
            return
        if not length:
            raise StreamIterationError(
                offset, f"end marker after {ordinal} of {schema.total_chunks} chunks", ordinal
            )
        payload = source.read(length)
        if len(payload) < length:
            raise StreamIterationError(
                offset, f"payload truncated after {len(payload)} of {length} bytes", ordinal
            )
        if verify and schema.checksum_kind.compute(payload) != checksum:
            raise CorruptChunkError(ordinal, "checksum mismatch")
        yield ChunkRecord(ordinal, offset, checksum, payload)
        offset += RECORD_HEADER.size + length


def iterate_stream(path: PathLike) -> Iterator[SampleRecord]:
    """Yield every sample of a stream or indexable file in global-index order.

    Indexable files iterate identically; the footer after the end marker is
    never read.

    Raises:
        StreamIterationError: At the position of a truncated chunk
        CorruptChunkError: If a chunk fails its checksum
    """
    with open(path, "rb") as source:
        schema = read_stream_header(source)
        global_index = 0
        for record in iter_chunk_records(source, schema):
            count = schema.chunk_sample_count(record.ordinal)
            try:
                samples = decode_chunk(
                    record.payload, count, schema.sample_encoding, schema.fixed_sample_bytes
                )
            except ValueError as e:
                raise CorruptChunkError(record.ordinal, str(e)) from e
            for sample in samples:
                yield SampleRecord(global_index, sample)
                global_index += 1


def is_indexable(path: PathLike) -> bool:
    """True if the file ends with the footer's trailing magic."""
    with open(path, "rb") as source:
        source.seek(0, os.SEEK_END)
        size = source.tell()
        if size < HEADER_SIZE + TRAILER.size:
            return False
        source.seek(size - len(TRAILING_MAGIC))
        return source.read(len(TRAILING_MAGIC)) == TRAILING_MAGIC
