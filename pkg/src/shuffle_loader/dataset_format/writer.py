import logging
import os
from collections.abc import Sequence as SequenceABC
from dataclasses import dataclass
from itertools import islice
from typing import BinaryIO, Iterable, Iterator, List, Optional, Tuple, Union

from ..checksum import ChecksumKind
from ..errors import AbortedFileError, SampleSizeError
from .layout import (
    DEFAULT_CHUNK_BYTES,
    DEFAULT_VARIABLE_SAMPLES_PER_CHUNK,
    HEADER_SIZE,
    MAX_CHUNK_PAYLOAD,
    RECORD_HEADER,
    ChunkIndexEntry,
    DatasetManifest,
    SampleEncoding,
    SchemaDescriptor,
    default_samples_per_chunk,
    encode_chunk,
)

logger = logging.getLogger(__name__)

Destination = Union[str, os.PathLike, BinaryIO]


@dataclass(frozen=True)
class WriteStats:
    chunks_written: int
    bytes_written: int


class ChunkFileWriter:
    """Single-owner writer of one dataset file.

    Writes the header on construction, then chunk records as they are handed
    over, and finally the end marker (plus the footer for indexable files).
    Any OSError from the sink is re-raised as AbortedFileError; the partial
    file then lacks its end marker.
    """

    def __init__(self, sink: BinaryIO, schema: SchemaDescriptor):
        self._sink = sink
        self.schema = schema
        self._entries: List[ChunkIndexEntry] = []
        self._position = 0
        self._next_global = 0
        self._write(schema.pack())

    @property
    def entries(self) -> List[ChunkIndexEntry]:
        """Index entries of the chunks written so far."""
        return self._entries

    @property
    def position(self) -> int:
        """Bytes written so far."""
        return self._position

    def _write(self, data: bytes) -> None:
        try:
            self._sink.write(data)
        except OSError as e:
            raise AbortedFileError(
                f"write failed after {self._position} bytes: {e}; "
                "the file has no end marker and must be discarded"
            ) from e
        self._position += len(data)

    def write_chunk(self, payloads: List[bytes]) -> ChunkIndexEntry:
        """Encode and write one chunk of samples."""
        schema = self.schema
        payload = encode_chunk(payloads, schema.sample_encoding, schema.fixed_sample_bytes)
        return self.write_encoded_chunk(payload, len(payloads))

    def write_encoded_chunk(
        self, payload: bytes, sample_count: int, checksum: Optional[int] = None
    ) -> ChunkIndexEntry:
        """Write an already-encoded chunk payload."""
        ordinal = len(self._entries)
        if ordinal >= self.schema.total_chunks:
            raise SampleSizeError(
                f"schema declares {self.schema.total_chunks} chunks, got another one"
            )
        expected_count = self.schema.chunk_sample_count(ordinal)
        if sample_count != expected_count:
            raise SampleSizeError(
                f"chunk {ordinal} must hold {expected_count} samples, got {sample_count}"
            )
        if not payload:
            # A zero-length record is the end marker
            raise SampleSizeError(f"chunk {ordinal} has an empty payload")
        if len(payload) > MAX_CHUNK_PAYLOAD:
            raise SampleSizeError(
                f"chunk {ordinal} payload is {len(payload)} bytes, the format allows "
                f"{MAX_CHUNK_PAYLOAD}; use fewer samples per chunk"
            )
        if checksum is None:
            checksum = self.schema.checksum_kind.compute(payload)
        entry = ChunkIndexEntry(
            chunk_ordinal=ordinal,
            byte_offset=self._position,
            byte_length=RECORD_HEADER.size + len(payload),
            sample_count=sample_count,
            first_global_index=self._next_global,
            checksum=checksum,
        )
        self._write(RECORD_HEADER.pack(len(payload), checksum))
        self._write(payload)
        self._entries.append(entry)
        self._next_global += sample_count
        logger.debug(
            "wrote chunk %d: %d samples, %d bytes at offset %d",
            ordinal,
            sample_count,
            len(payload),
            entry.byte_offset,
        )
        return entry

    def finish(self, with_footer: bool) -> DatasetManifest:
        """Write the end marker and, for indexable files, the footer."""
        manifest = DatasetManifest(self.schema, self._entries)
        if len(self._entries) != self.schema.total_chunks:
            raise SampleSizeError(
                f"schema declares {self.schema.total_chunks} chunks, "
                f"only {len(self._entries)} were written"
            )
        self._write(RECORD_HEADER.pack(0, 0))
        if with_footer:
            manifest.validate()
            self._write(manifest.footer_bytes())
        try:
            self._sink.flush()
        except OSError as e:
            raise AbortedFileError(f"flush failed: {e}") from e
        return manifest


def _infer_encoding(samples: Iterable[bytes]) -> Tuple[SampleEncoding, int]:
    lengths = {len(sample) for sample in samples}
    if len(lengths) == 1:
        (length,) = lengths
        if length > 0:
            return SampleEncoding.FIXED_SIZE, length
    return SampleEncoding.LENGTH_PREFIXED, 0


def open_destination(destination: Destination) -> Tuple[BinaryIO, bool]:
    """Return a writable sink and whether the caller owns (must close) it."""
    if hasattr(destination, "write"):
        return destination, False
    try:
        return open(destination, "wb"), True
    except OSError as e:
        raise AbortedFileError(f"cannot create {destination}: {e}") from e


def _write_dataset(
    samples: Iterable[bytes],
    destination: Destination,
    samples_per_chunk: Optional[int],
    with_footer: bool,
    encoding: Optional[SampleEncoding],
    fixed_sample_bytes: Optional[int],
    total_samples: Optional[int],
    checksum: ChecksumKind,
    chunk_bytes: int,
    variable_samples_per_chunk: int,
) -> DatasetManifest:
    if total_samples is None:
        if not isinstance(samples, SequenceABC):
            raise ValueError("total_samples is required when samples is not a sequence")
        total_samples = len(samples)
    if encoding is None:
        if not isinstance(samples, SequenceABC):
            raise ValueError("encoding is required when samples is not a sequence")
        encoding, inferred_bytes = _infer_encoding(samples)
        fixed_sample_bytes = inferred_bytes
    if encoding is SampleEncoding.FIXED_SIZE and not fixed_sample_bytes:
        raise ValueError("fixed_sample_bytes is required for fixed-size encoding")
    if samples_per_chunk is None:
        samples_per_chunk = default_samples_per_chunk(
            encoding, fixed_sample_bytes or 0, chunk_bytes, variable_samples_per_chunk
        )
    schema = SchemaDescriptor.for_samples(
        total_samples, samples_per_chunk, encoding, fixed_sample_bytes or 0, checksum
    )

    sink, owned = open_destination(destination)
    try:
        writer = ChunkFileWriter(sink, schema)
        iterator: Iterator[bytes] = iter(samples)
        for ordinal in range(schema.total_chunks):
            chunk = list(islice(iterator, schema.chunk_sample_count(ordinal)))
            writer.write_chunk(chunk)
        if next(iterator, None) is not None:
            raise SampleSizeError(f"more than the declared {total_samples} samples were given")
        return writer.finish(with_footer)
    finally:
        if owned:
            sink.close()


def write_stream_dataset(
    samples: Iterable[bytes],
    destination: Destination,
    samples_per_chunk: Optional[int] = None,
    *,
    encoding: Optional[SampleEncoding] = None,
    fixed_sample_bytes: Optional[int] = None,
    total_samples: Optional[int] = None,
    checksum: ChecksumKind = ChecksumKind.FNV1A_64,
    chunk_bytes: int = DEFAULT_CHUNK_BYTES,
    variable_samples_per_chunk: int = DEFAULT_VARIABLE_SAMPLES_PER_CHUNK,
) -> WriteStats:
    """Write samples as a stream file: header, chunk records, end marker, no index.

    When `samples` is a sequence the encoding is inferred: fixed-size if every
    payload has the same non-zero length, length-prefixed otherwise. Iterables
    must come with `total_samples` and `encoding`.

    Args:
        samples: Sample payloads in global-index order
        destination: A path or a writable binary file object
        samples_per_chunk: Samples per chunk; derived from `chunk_bytes` when None
        encoding: Sample encoding, inferred for sequences when None
        fixed_sample_bytes: Sample size for fixed-size encoding
        total_samples: Sample count, required for non-sequence iterables
        checksum: Chunk checksum algorithm
        chunk_bytes: Target chunk size used to derive `samples_per_chunk` for
            fixed-size samples
        variable_samples_per_chunk: `samples_per_chunk` for length-prefixed
            samples when it is None

    Returns:
        WriteStats: Chunks and bytes written

    Raises:
        AbortedFileError: If the destination cannot be written
        SampleSizeError: If a payload does not fit the encoding
    """
    manifest = _write_dataset(
        samples,
        destination,
        samples_per_chunk,
        False,
        encoding,
        fixed_sample_bytes,
        total_samples,
        checksum,
        chunk_bytes,
        variable_samples_per_chunk,
    )
    stats = WriteStats(
        chunks_written=len(manifest.chunk_index),
        bytes_written=_stream_size(manifest),
    )
    logger.info(
        "wrote stream dataset: %d chunks, %d bytes",
        stats.chunks_written,
        stats.bytes_written,
    )
    return stats


def write_indexable_dataset(
    samples: Iterable[bytes],
    destination: Destination,
    samples_per_chunk: Optional[int] = None,
    *,
    encoding: Optional[SampleEncoding] = None,
    fixed_sample_bytes: Optional[int] = None,
    total_samples: Optional[int] = None,
    checksum: ChecksumKind = ChecksumKind.FNV1A_64,
    chunk_bytes: int = DEFAULT_CHUNK_BYTES,
    variable_samples_per_chunk: int = DEFAULT_VARIABLE_SAMPLES_PER_CHUNK,
) -> DatasetManifest:
    """Write samples as an indexable file: the stream layout plus a footer chunk index.

    Takes the same arguments as `write_stream_dataset`.

    Returns:
        DatasetManifest: The manifest stored in the footer
    """
    manifest = _write_dataset(
        samples,
        destination,
        samples_per_chunk,
        True,
        encoding,
        fixed_sample_bytes,
        total_samples,
        checksum,
        chunk_bytes,
        variable_samples_per_chunk,
    )
    logger.info(
        "wrote indexable dataset: %d samples in %d chunks",
        manifest.schema.total_samples,
        manifest.schema.total_chunks,
    )
    return manifest


def _stream_size(manifest: DatasetManifest) -> int:
    if not manifest.chunk_index:
        return HEADER_SIZE + RECORD_HEADER.size
    last = manifest.chunk_index[-1]
    return last.byte_offset + last.byte_length + RECORD_HEADER.size

