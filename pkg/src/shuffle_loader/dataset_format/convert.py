import logging
import os
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

from ..errors import ConversionError, CorruptChunkError, StreamIterationError
from ..timing import Gauge
from .layout import DatasetManifest
from .reader import iter_chunk_records, read_stream_header
from .writer import ChunkFileWriter, Destination, open_destination

logger = logging.getLogger(__name__)


@dataclass
class ConversionStats:
    """What a conversion wrote and how much chunk data it held at once."""

    chunks: int = 0
    bytes_written: int = 0
    buffer: Gauge = field(default_factory=Gauge)

    @property
    def peak_buffer_bytes(self) -> int:
        """Largest number of chunk payload bytes held in memory at any instant."""
        return self.buffer.peak


def convert_stream_to_indexable(
    source: Union[str, os.PathLike],
    destination: Destination,
    *,
    stats: Optional[ConversionStats] = None,
    progress: Optional[Callable[[int], None]] = None,
) -> DatasetManifest:
    """Convert a stream file into an indexable file, one chunk at a time.

    Each source chunk is read, verified, and written straight through, so the
    working set is a single chunk payload plus the growing chunk index. The
    source's checksum algorithm and chunking are preserved.

    Args:
        source: Path of a stream (or indexable) file
        destination: Path or writable binary file for the indexable output
        stats: Optional instrumentation filled in during conversion
        progress: Optional callback receiving the payload bytes of each chunk

    Returns:
        DatasetManifest: The manifest written to the destination footer

    Raises:
        ConversionError: If a source chunk is corrupt or truncated
        AbortedFileError: If the destination cannot be written
    """
    stats = stats if stats is not None else ConversionStats()
    with open(source, "rb") as reader:
        schema = read_stream_header(reader)
        sink, owned = open_destination(destination)
        try:
            writer = ChunkFileWriter(sink, schema)
            records = iter_chunk_records(reader, schema)
            while True:
                try:
                    record = next(records, None)
                except (CorruptChunkError, StreamIterationError) as e:
                    raise ConversionError(e.chunk_ordinal, str(e)) from e
                if record is None:
                    break
                with stats.buffer.track(len(record.payload)):
                    writer.write_encoded_chunk(
                        record.payload,
                        schema.chunk_sample_count(record.ordinal),
                        record.checksum,
                    )
                    stats.chunks += 1
                    if progress is not None:
                        progress(len(record.payload))
                del record
            manifest = writer.finish(with_footer=True)
            stats.bytes_written = writer.position
        finally:
            if owned:
                sink.close()
    logger.info(
        "converted %s: %d chunks, %d bytes, peak buffer %d bytes",
        source,
        stats.chunks,
        stats.bytes_written,
        stats.peak_buffer_bytes,
    )
    return manifest
