"""The data plane: dataset container formats, conversion and random access."""

from .convert import ConversionStats as ConversionStats
from .convert import convert_stream_to_indexable as convert_stream_to_indexable
from .file_tree import FileTreeDataset as FileTreeDataset
from .file_tree import write_file_tree as write_file_tree
from .layout import ChunkIndexEntry as ChunkIndexEntry
from .layout import DatasetManifest as DatasetManifest
from .layout import SampleEncoding as SampleEncoding
from .layout import SampleRecord as SampleRecord
from .layout import SchemaDescriptor as SchemaDescriptor
from .reader import DatasetHandle as DatasetHandle
from .reader import is_indexable as is_indexable
from .reader import iterate_stream as iterate_stream
from .reader import open_indexable as open_indexable
from .reader import open_stream_scanned as open_stream_scanned
from .writer import WriteStats as WriteStats
from .writer import write_indexable_dataset as write_indexable_dataset
from .writer import write_stream_dataset as write_stream_dataset


def get_chunk(handle: DatasetHandle, chunk_ordinal: int, **kwargs) -> list:
    """Functional form of `DatasetHandle.get_chunk`."""
    return handle.get_chunk(chunk_ordinal, **kwargs)


def get_sample(handle, global_index: int, **kwargs) -> SampleRecord:
    """Functional form of `get_sample` for any sample source."""
    return handle.get_sample(global_index, **kwargs)
