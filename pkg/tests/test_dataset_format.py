"""Tests for the stream and indexable container formats."""

import io
import random
import time
from concurrent.futures import ThreadPoolExecutor

import pytest

from shuffle_loader.checksum import ChecksumKind
from shuffle_loader.dataset_format import (
    DatasetManifest,
    FileTreeDataset,
    SampleEncoding,
    get_chunk,
    get_sample,
    is_indexable,
    iterate_stream,
    open_indexable,
    open_stream_scanned,
    write_file_tree,
    write_indexable_dataset,
    write_stream_dataset,
)
from shuffle_loader.dataset_format.layout import (
    HEADER_SIZE,
    INDEX_ENTRY,
    RECORD_HEADER,
    TRAILER,
    ChunkIndexEntry,
    decode_chunk,
    encode_chunk,
)
from shuffle_loader.errors import (
    AbortedFileError,
    CorruptChunkError,
    DatasetFormatError,
    ManifestInvariantError,
    NoFooterIndexError,
    SampleIndexError,
    SampleSizeError,
    StreamIterationError,
    UnsupportedVersionError,
)
from shuffle_loader.timing import StageTimes

from .conftest import make_fixed_samples, make_variable_samples


def _flip_byte(path, offset):
    data = bytearray(path.read_bytes())
    data[offset] ^= 0xFF
    path.write_bytes(bytes(data))


class TestRoundTrip:
    """Written samples come back byte-exact."""

    def test_fixed_size_random_access(self, indexable_file, fixed_samples):
        """Test get_sample(i) for every i"""
        with open_indexable(indexable_file) as handle:
            assert len(handle) == len(fixed_samples)
            assert handle.schema.sample_encoding is SampleEncoding.FIXED_SIZE
            for i, expected in enumerate(fixed_samples):
                record = handle.get_sample(i)
                assert record.global_index == i
                assert record.payload == expected

    def test_variable_size_random_access(self, tmp_path, variable_samples):
        """Test length-prefixed samples, including empty ones"""
        path = tmp_path / "var.indexable"
        manifest = write_indexable_dataset(variable_samples, path, 7)

        assert manifest.schema.sample_encoding is SampleEncoding.LENGTH_PREFIXED
        with open_indexable(path) as handle:
            order = list(range(len(variable_samples)))
            random.Random(1).shuffle(order)
            for i in order:
                assert handle.get_sample(i).payload == variable_samples[i]

    def test_stream_iteration_matches(self, stream_file, fixed_samples):
        """Test that forward iteration yields samples in global order"""
        records = list(iterate_stream(stream_file))
        assert [r.global_index for r in records] == list(range(len(fixed_samples)))
        assert [r.payload for r in records] == fixed_samples

    def test_indexable_iterates_like_stream(self, indexable_file, stream_file):
        """Test that an indexable file is also a valid stream"""
        assert [r.payload for r in iterate_stream(indexable_file)] == [
            r.payload for r in iterate_stream(stream_file)
        ]

    def test_stream_is_prefix_of_indexable(self, indexable_file, stream_file):
        """Test that the indexable layout only appends the footer"""
        assert indexable_file.read_bytes().startswith(stream_file.read_bytes())
        assert is_indexable(indexable_file)
        assert not is_indexable(stream_file)

    def test_get_chunk(self, indexable_file, fixed_samples):
        """Test that a chunk decodes to its samples with global indices"""
        with open_indexable(indexable_file) as handle:
            last = handle.schema.total_chunks - 1
            records = get_chunk(handle, last)
        assert len(records) == 1000 - 64 * 15
        assert records[0].global_index == 64 * 15
        assert [r.payload for r in records] == fixed_samples[64 * 15 :]

    def test_functional_get_sample(self, indexable_file, fixed_samples):
        """Test the functional form"""
        with open_indexable(indexable_file) as handle:
            assert get_sample(handle, 999).payload == fixed_samples[999]

    def test_blake2b_checksums(self, tmp_path, fixed_samples):
        """Test a file written with the alternative checksum"""
        path = tmp_path / "b.indexable"
        write_indexable_dataset(fixed_samples, path, 100, checksum=ChecksumKind.BLAKE2B_64)
        with open_indexable(path) as handle:
            assert handle.schema.checksum_kind is ChecksumKind.BLAKE2B_64
            assert handle.get_sample(500).payload == fixed_samples[500]

    @pytest.mark.parametrize("writer", [write_stream_dataset, write_indexable_dataset])
    def test_empty_dataset(self, tmp_path, writer):
        """Test that zero samples give a valid file with zero chunks"""
        path = tmp_path / "empty"
        writer([], path, 10, encoding=SampleEncoding.FIXED_SIZE, fixed_sample_bytes=4)
        assert list(iterate_stream(path)) == []

    def test_empty_indexable_opens(self, tmp_path):
        """Test that an empty indexable file opens with no chunks"""
        path = tmp_path / "empty.indexable"
        write_indexable_dataset([], path, 10, encoding=SampleEncoding.FIXED_SIZE, fixed_sample_bytes=4)
        with open_indexable(path) as handle:
            assert len(handle) == 0
            with pytest.raises(SampleIndexError):
                handle.get_sample(0)

    def test_generator_input(self, tmp_path):
        """Test writing from an iterator with declared size and encoding"""
        path = tmp_path / "gen.indexable"
        samples = (bytes([i % 256]) * 4 for i in range(50))
        write_indexable_dataset(
            samples,
            path,
            8,
            encoding=SampleEncoding.FIXED_SIZE,
            fixed_sample_bytes=4,
            total_samples=50,
        )
        with open_indexable(path) as handle:
            assert handle.get_sample(49).payload == bytes([49]) * 4

    def test_chunk_count_from_chunk_bytes(self, tmp_path):
        """Test that samples per chunk derive from the target chunk size"""
        path = tmp_path / "derived.indexable"
        manifest = write_indexable_dataset(make_fixed_samples(100, 10), path, chunk_bytes=250)
        assert manifest.schema.samples_per_chunk == 25
        assert manifest.schema.total_chunks == 4

    def test_variable_samples_per_chunk(self, tmp_path):
        """Test that length-prefixed chunks follow variable_samples_per_chunk"""
        samples = [b"a", b"bb", b"ccc", b"dddd", b"e"]
        stats = write_stream_dataset(samples, io.BytesIO(), variable_samples_per_chunk=2)
        assert stats.chunks_written == 3
        manifest = write_indexable_dataset(
            samples, tmp_path / "var.indexable", variable_samples_per_chunk=2
        )
        assert manifest.schema.samples_per_chunk == 2
        with pytest.raises(ValueError):
            write_stream_dataset(samples, io.BytesIO(), variable_samples_per_chunk=0)

    def test_file_object_destination(self, fixed_samples):
        """Test writing into an in-memory sink"""
        sink = io.BytesIO()
        stats = write_stream_dataset(fixed_samples, sink, 64)
        assert stats.chunks_written == 16
        assert stats.bytes_written == len(sink.getvalue())


class TestWriterErrors:
    """Invalid input and sink failures."""

    def test_wrong_fixed_size(self, tmp_path):
        """Test that a payload of the wrong size is rejected"""
        samples = (b"abcd" if i != 3 else b"abc" for i in range(5))
        with pytest.raises(SampleSizeError):
            write_stream_dataset(
                samples,
                tmp_path / "x",
                2,
                encoding=SampleEncoding.FIXED_SIZE,
                fixed_sample_bytes=4,
                total_samples=5,
            )

    def test_iterable_needs_total(self, tmp_path):
        """Test that a bare iterator without a total is an argument error"""
        with pytest.raises(ValueError):
            write_stream_dataset(iter([b"a"]), tmp_path / "x", 1, encoding=SampleEncoding.FIXED_SIZE)

    def test_failing_sink(self):
        """Test that a sink failure aborts the file"""

        class FullDisk(io.BytesIO):
            def write(self, data):
                if self.tell() + len(data) > 200:
                    raise OSError(28, "No space left on device")
                return super().write(data)

        with pytest.raises(AbortedFileError, match="no end marker"):
            write_indexable_dataset(make_fixed_samples(100), FullDisk(), 10)


class TestOpenErrors:
    """Clean failures when opening damaged or foreign files."""

    def test_stream_file_has_no_footer(self, stream_file):
        """Test that opening a stream file says there is no footer index"""
        with pytest.raises(NoFooterIndexError, match="no footer index"):
            open_indexable(stream_file)

    def test_truncated_footer(self, indexable_file):
        """Test that a cut-off footer is reported as a missing footer index"""
        data = indexable_file.read_bytes()
        indexable_file.write_bytes(data[:-30])
        with pytest.raises(NoFooterIndexError, match="no footer index"):
            open_indexable(indexable_file)

    def test_bad_magic(self, tmp_path):
        """Test that a foreign file is rejected"""
        path = tmp_path / "foreign"
        path.write_bytes(b"PK\x03\x04" + bytes(100))
        with pytest.raises(DatasetFormatError, match="not a dataset file"):
            open_indexable(path)

    def test_unsupported_version(self, indexable_file):
        """Test that an unknown version is rejected"""
        data = bytearray(indexable_file.read_bytes())
        data[4] = 99
        indexable_file.write_bytes(bytes(data))
        with pytest.raises(UnsupportedVersionError):
            open_indexable(indexable_file)

    def test_short_file(self, tmp_path):
        """Test that a file shorter than the header is rejected"""
        path = tmp_path / "short"
        path.write_bytes(b"SHFD")
        with pytest.raises(DatasetFormatError):
            open_indexable(path)

    def test_missing_file(self, tmp_path):
        """Test that a missing file is an OSError"""
        with pytest.raises(OSError):
            open_indexable(tmp_path / "nope")


class TestCorruption:
    """Checksums catch flipped bytes at the right chunk."""

    def test_random_access_detects_flip(self, indexable_file):
        """Test that reading a corrupted chunk fails with its ordinal"""
        with open_indexable(indexable_file) as handle:
            entry = handle.manifest.chunk_index[5]
        _flip_byte(indexable_file, entry.byte_offset + RECORD_HEADER.size + 3)

        with open_indexable(indexable_file) as handle:
            assert handle.get_sample(0).payload  # other chunks still fine
            with pytest.raises(CorruptChunkError) as exc_info:
                handle.get_sample(5 * 64 + 1)
        assert exc_info.value.chunk_ordinal == 5

    def test_stream_iteration_detects_flip(self, stream_file):
        """Test that forward iteration fails at the corrupted chunk"""
        offset = HEADER_SIZE + 2 * (RECORD_HEADER.size + 64 * 16) + RECORD_HEADER.size
        _flip_byte(stream_file, offset)
        with pytest.raises(CorruptChunkError) as exc_info:
            list(iterate_stream(stream_file))
        assert exc_info.value.chunk_ordinal == 2

    def test_truncated_stream(self, stream_file):
        """Test that a truncated record reports its position"""
        record = RECORD_HEADER.size + 64 * 16
        cut = HEADER_SIZE + 3 * record + 100
        stream_file.write_bytes(stream_file.read_bytes()[:cut])
        with pytest.raises(StreamIterationError) as exc_info:
            list(iterate_stream(stream_file))
        assert exc_info.value.chunk_ordinal == 3
        assert exc_info.value.position == HEADER_SIZE + 3 * record

    def test_missing_end_marker(self, stream_file):
        """Test that a stream without its end marker is incomplete"""
        stream_file.write_bytes(stream_file.read_bytes()[: -RECORD_HEADER.size])
        with pytest.raises(StreamIterationError, match="end marker"):
            list(iterate_stream(stream_file))


class TestOpenCost:
    """Opening reads the footer only."""

    def _write(self, path, chunks, sample_bytes):
        write_indexable_dataset(make_fixed_samples(chunks, sample_bytes), path, 1)

    def test_open_bytes_formula(self, tmp_path):
        """Test that open reads header, trailer and one entry per chunk"""
        for chunks in (100, 10_000):
            path = tmp_path / f"{chunks}.indexable"
            self._write(path, chunks, 8)
            with open_indexable(path) as handle:
                assert handle.open_bytes == HEADER_SIZE + TRAILER.size + INDEX_ENTRY.size * chunks
                assert handle.bytes_read == 0

    def test_open_bytes_ignore_payload_size(self, tmp_path):
        """Test that 100x larger payloads do not change what open reads"""
        small, large = tmp_path / "small", tmp_path / "large"
        self._write(small, 100, 8)
        self._write(large, 100, 800)
        with open_indexable(small) as a, open_indexable(large) as b:
            assert a.open_bytes == b.open_bytes

    def test_scan_open_reads_payloads(self, stream_file):
        """Test that scan-at-open reads every payload byte"""
        with open_stream_scanned(stream_file) as handle:
            assert handle.open_bytes >= 1000 * 16
            assert handle.manifest.schema.total_chunks == 16
            assert handle.get_sample(999).payload == list(iterate_stream(stream_file))[999].payload


class TestHandle:
    """Random access behaviour of DatasetHandle."""

    def test_out_of_range(self, indexable_file):
        """Test that bad indices raise SampleIndexError, also an IndexError"""
        with open_indexable(indexable_file) as handle:
            with pytest.raises(SampleIndexError):
                handle.get_sample(1000)
            with pytest.raises(IndexError):
                handle.get_sample(-1)
            with pytest.raises(SampleIndexError):
                handle.get_chunk(16)

    def test_concurrent_reads_do_not_interfere(self, indexable_file, fixed_samples):
        """Test many threads reading one handle at once"""
        order = list(range(1000)) * 3
        random.Random(5).shuffle(order)
        with open_indexable(indexable_file) as handle:
            with ThreadPoolExecutor(max_workers=16) as pool:
                records = list(pool.map(handle.get_sample, order))
        assert all(r.payload == fixed_samples[r.global_index] for r in records)
        assert [r.global_index for r in records] == order

    def test_chunk_cache(self, indexable_file):
        """Test that cached chunks are not read twice"""
        with open_indexable(indexable_file, cache_chunks=2) as handle:
            handle.get_sample(0)
            after_first = handle.bytes_read
            for i in range(64):
                handle.get_sample(i)
            assert handle.bytes_read == after_first

    def test_without_cache_every_fetch_reads(self, indexable_file):
        """Test that each fetch reads its whole chunk record"""
        with open_indexable(indexable_file) as handle:
            handle.get_sample(0)
            handle.get_sample(1)
            assert handle.bytes_read == 2 * (RECORD_HEADER.size + 64 * 16)

    def test_injected_latency_and_timings(self, indexable_file):
        """Test that latency is spent inside the read stage"""
        timings = StageTimes()
        with open_indexable(indexable_file) as handle:
            start = time.perf_counter()
            handle.get_sample(3, read_latency=0.02, timings=timings)
            elapsed = time.perf_counter() - start
        assert elapsed >= 0.02
        assert timings.snapshot()["read"] >= 0.02
        assert timings.snapshot()["index_lookup"] >= 0.0


class TestLayout:
    """Encoding helpers and manifest invariants."""

    def test_decode_rejects_wrong_length(self):
        """Test that a fixed-size payload of the wrong length fails"""
        with pytest.raises(ValueError):
            decode_chunk(b"x" * 10, 3, SampleEncoding.FIXED_SIZE, 4)

    def test_length_prefixed_round_trip(self):
        """Test encode then decode of one chunk"""
        samples = make_variable_samples(20)
        payload = encode_chunk(samples, SampleEncoding.LENGTH_PREFIXED, 0)
        assert decode_chunk(payload, 20, SampleEncoding.LENGTH_PREFIXED, 0) == samples

    def test_trailing_bytes_rejected(self):
        """Test that garbage after the last length-prefixed sample fails"""
        payload = encode_chunk([b"ab"], SampleEncoding.LENGTH_PREFIXED, 0) + b"z"
        with pytest.raises(ValueError, match="trailing"):
            decode_chunk(payload, 1, SampleEncoding.LENGTH_PREFIXED, 0)

    def test_manifest_locate(self, indexable_file):
        """Test mapping global indices to chunk and offset"""
        with open_indexable(indexable_file) as handle:
            manifest = handle.manifest
        assert manifest.locate(0) == (0, 0)
        assert manifest.locate(63) == (0, 63)
        assert manifest.locate(64) == (1, 0)
        assert manifest.locate(999) == (15, 999 - 960)

    def test_manifest_rejects_gaps(self, indexable_file):
        """Test that non-contiguous sample ranges are invariant violations"""
        with open_indexable(indexable_file) as handle:
            manifest = handle.manifest
        entries = list(manifest.chunk_index)
        second = entries[1]
        entries[1] = ChunkIndexEntry(
            second.chunk_ordinal,
            second.byte_offset,
            second.byte_length,
            second.sample_count,
            second.first_global_index + 1,
            second.checksum,
        )
        with pytest.raises(ManifestInvariantError, match="expected 64"):
            DatasetManifest(manifest.schema, entries).validate()

    def test_manifest_rejects_overlap(self, indexable_file):
        """Test that overlapping byte ranges are invariant violations"""
        with open_indexable(indexable_file) as handle:
            manifest = handle.manifest
        entries = list(manifest.chunk_index)
        second = entries[1]
        entries[1] = ChunkIndexEntry(
            1, second.byte_offset - 1, second.byte_length, 64, 64, second.checksum
        )
        with pytest.raises(ManifestInvariantError, match="overlapping"):
            DatasetManifest(manifest.schema, entries).validate()


class TestFileTree:
    """One file per sample."""

    def test_round_trip(self, tmp_path, variable_samples):
        """Test that a sample tree serves every sample"""
        root = tmp_path / "tree"
        assert write_file_tree(variable_samples, root) == len(variable_samples)
        dataset = FileTreeDataset(root)
        assert len(dataset) == len(variable_samples)
        for i in (0, 17, len(variable_samples) - 1):
            assert dataset.get_sample(i).payload == variable_samples[i]
        with pytest.raises(SampleIndexError):
            dataset.get_sample(len(variable_samples))

    def test_not_a_tree(self, tmp_path):
        """Test that a directory without a manifest is rejected"""
        with pytest.raises(DatasetFormatError, match="not a sample tree"):
            FileTreeDataset(tmp_path)
