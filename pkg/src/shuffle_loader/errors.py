"""Exception hierarchy for shuffle-loader.

Every error raised on purpose by this package derives from `ShuffleLoaderError`.
Argument errors also derive from `ValueError` and index errors from `IndexError`,
so callers can catch either the builtin or the project class.
"""

from typing import Optional


class ShuffleLoaderError(Exception):
    """Base class for all shuffle-loader errors."""


# Data plane


class DatasetFormatError(ShuffleLoaderError):
    """A dataset file does not follow the container layout."""


class AbortedFileError(DatasetFormatError):
    """Writing a dataset file failed part way; the file has no end marker."""


class NoFooterIndexError(DatasetFormatError):
    """The file has no footer index (it is a stream file or the footer is damaged)."""


class TruncatedFileError(DatasetFormatError):
    """The file ends before a structure it declares."""


class UnsupportedVersionError(DatasetFormatError):
    """The file was written with a format version this reader does not understand."""


class ManifestInvariantError(DatasetFormatError):
    """A chunk index violates an invariant (ordering, counts, disjoint ranges)."""


class CorruptChunkError(DatasetFormatError):
    """A chunk's payload does not match its checksum or declared length."""

    def __init__(self, chunk_ordinal: int, message: str):
        self.chunk_ordinal = chunk_ordinal
        super().__init__(f"chunk {chunk_ordinal}: {message}")


class StreamIterationError(DatasetFormatError):
    """Forward iteration stopped at a damaged or truncated chunk record."""

    def __init__(self, position: int, message: str, chunk_ordinal: Optional[int] = None):
        self.position = position
        self.chunk_ordinal = chunk_ordinal
        where = f"chunk {chunk_ordinal} at byte {position}" if chunk_ordinal is not None else f"at byte {position}"
        super().__init__(f"{where}: {message}")


class ConversionError(ShuffleLoaderError):
    """Stream to indexable conversion hit a corrupt source chunk."""

    def __init__(self, chunk_ordinal: int, message: str):
        self.chunk_ordinal = chunk_ordinal
        super().__init__(f"cannot convert chunk {chunk_ordinal}: {message}")


class SampleIndexError(ShuffleLoaderError, IndexError):
    """A global sample index or chunk ordinal is out of range."""


class SampleSizeError(ShuffleLoaderError, ValueError):
    """A payload does not have the size the schema requires."""


# Control plane


class BatchFetchError(ShuffleLoaderError):
    """Fetching or preprocessing one sample of a batch failed."""

    def __init__(self, batch_ordinal: int, global_index: int, cause: BaseException):
        self.batch_ordinal = batch_ordinal
        self.global_index = global_index
        self.cause = cause
        super().__init__(
            f"batch {batch_ordinal} failed at sample {global_index}: "
            f"{type(cause).__name__}: {cause}"
        )


# Trainer


class TrainingError(ShuffleLoaderError):
    """Training stopped because a batch could not be used."""

    def __init__(self, batch_ordinal: Optional[int], message: str):
        self.batch_ordinal = batch_ordinal
        where = f"batch {batch_ordinal}" if batch_ordinal is not None else "training"
        super().__init__(f"{where}: {message}")


class NumericError(ShuffleLoaderError, FloatingPointError):
    """A gradient or parameter vector is not finite."""


# Harness


class BenchValidationError(ShuffleLoaderError, ValueError):
    """The dataset does not match the benchmark configuration."""


class VerificationError(ShuffleLoaderError):
    """A dataset failed verification."""


class PairingError(ShuffleLoaderError, ValueError):
    """Metrics rows could not be paired for comparison."""
