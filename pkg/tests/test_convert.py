"""Tests for stream to indexable conversion."""

import os
import shutil
import tracemalloc

import pytest

from shuffle_loader.checksum import ChecksumKind
from shuffle_loader.dataset_format import (
    ConversionStats,
    SampleEncoding,
    convert_stream_to_indexable,
    iterate_stream,
    open_indexable,
    write_stream_dataset,
)
from shuffle_loader.dataset_format.layout import HEADER_SIZE, RECORD_HEADER
from shuffle_loader.errors import ConversionError


class TestConversion:
    """Conversion preserves every sample and the chunking."""

    def test_identical_to_direct_write(self, tmp_path, stream_file, indexable_file):
        """Test that converting gives the same bytes as writing indexable directly"""
        converted = tmp_path / "converted.indexable"
        convert_stream_to_indexable(stream_file, converted)
        assert converted.read_bytes() == indexable_file.read_bytes()

    def test_samples_preserved(self, tmp_path, stream_file, fixed_samples):
        """Test get_sample on the converted file"""
        converted = tmp_path / "converted.indexable"
        manifest = convert_stream_to_indexable(stream_file, converted)

        assert manifest.schema.total_samples == 1000
        with open_indexable(converted) as handle:
            for i in (0, 63, 64, 500, 999):
                assert handle.get_sample(i).payload == fixed_samples[i]

    def test_variable_length_and_checksum_kind(self, tmp_path, variable_samples):
        """Test that encoding and checksum algorithm carry over"""
        source = tmp_path / "var.stream"
        write_stream_dataset(variable_samples, source, 9, checksum=ChecksumKind.BLAKE2B_64)
        converted = tmp_path / "var.indexable"
        convert_stream_to_indexable(source, converted)

        with open_indexable(converted) as handle:
            assert handle.schema.sample_encoding is SampleEncoding.LENGTH_PREFIXED
            assert handle.schema.checksum_kind is ChecksumKind.BLAKE2B_64
            assert [handle.get_sample(i).payload for i in range(len(handle))] == variable_samples

    def test_converting_an_indexable_file(self, tmp_path, indexable_file):
        """Test that an indexable source converts to itself"""
        converted = tmp_path / "again.indexable"
        convert_stream_to_indexable(indexable_file, converted)
        assert converted.read_bytes() == indexable_file.read_bytes()

    def test_stats_and_progress(self, tmp_path, stream_file):
        """Test chunk counts, written bytes and progress callbacks"""
        seen = []
        stats = ConversionStats()
        converted = tmp_path / "converted.indexable"
        convert_stream_to_indexable(stream_file, converted, stats=stats, progress=seen.append)

        assert stats.chunks == 16
        assert stats.bytes_written == os.path.getsize(converted)
        assert sum(seen) == 1000 * 16
        assert len(seen) == 16

    def test_peak_buffer_is_one_chunk(self, tmp_path, stream_file):
        """Test that at most one chunk payload is held at a time"""
        stats = ConversionStats()
        convert_stream_to_indexable(stream_file, tmp_path / "c.indexable", stats=stats)

        chunk_payload = 64 * 16
        assert stats.peak_buffer_bytes == chunk_payload
        assert stats.peak_buffer_bytes <= 2 * chunk_payload
        assert stats.buffer.current == 0

    def test_empty_stream(self, tmp_path):
        """Test converting a dataset with no samples"""
        source = tmp_path / "empty.stream"
        write_stream_dataset(
            [], source, 4, encoding=SampleEncoding.FIXED_SIZE, fixed_sample_bytes=8
        )
        converted = tmp_path / "empty.indexable"
        convert_stream_to_indexable(source, converted)
        with open_indexable(converted) as handle:
            assert len(handle) == 0


class TestConversionErrors:
    """Corrupt or truncated sources fail with the chunk ordinal."""

    def test_corrupt_chunk(self, tmp_path, stream_file):
        """Test that a flipped payload byte stops conversion at that chunk"""
        record = RECORD_HEADER.size + 64 * 16
        data = bytearray(stream_file.read_bytes())
        data[HEADER_SIZE + 4 * record + RECORD_HEADER.size + 10] ^= 0x01
        stream_file.write_bytes(bytes(data))

        with pytest.raises(ConversionError) as exc_info:
            convert_stream_to_indexable(stream_file, tmp_path / "out.indexable")
        assert exc_info.value.chunk_ordinal == 4

    def test_truncated_source(self, tmp_path, stream_file):
        """Test that a truncated source names the incomplete chunk"""
        record = RECORD_HEADER.size + 64 * 16
        stream_file.write_bytes(stream_file.read_bytes()[: HEADER_SIZE + 7 * record + 5])

        with pytest.raises(ConversionError) as exc_info:
            convert_stream_to_indexable(stream_file, tmp_path / "out.indexable")
        assert exc_info.value.chunk_ordinal == 7


def _large_samples(count, size):
    base = bytes(range(256)) * (size // 256)
    for i in range(count):
        yield i.to_bytes(8, "little") + base[8:]


@pytest.mark.slow
class TestLargeConversion:
    """Multi-GiB conversion stays within two chunks of memory."""

    SAMPLE_BYTES = 1024 * 1024
    SAMPLES_PER_CHUNK = 64
    SAMPLES = 4096

    def test_four_gib(self, tmp_path):
        """Test a 4 GiB stream file with 64 MiB chunks"""
        if shutil.disk_usage(tmp_path).free < 9 * 1024**3:
            pytest.skip("needs about 9 GiB of free disk")
        source = tmp_path / "big.stream"
        write_stream_dataset(
            _large_samples(self.SAMPLES, self.SAMPLE_BYTES),
            source,
            self.SAMPLES_PER_CHUNK,
            encoding=SampleEncoding.FIXED_SIZE,
            fixed_sample_bytes=self.SAMPLE_BYTES,
            total_samples=self.SAMPLES,
            checksum=ChecksumKind.BLAKE2B_64,
        )
        chunk_payload = self.SAMPLE_BYTES * self.SAMPLES_PER_CHUNK
        stats = ConversionStats()
        converted = tmp_path / "big.indexable"

        tracemalloc.start()
        try:
            convert_stream_to_indexable(source, converted, stats=stats)
            _, traced_peak = tracemalloc.get_traced_memory()
        finally:
            tracemalloc.stop()
        source.unlink()

        assert stats.chunks == self.SAMPLES // self.SAMPLES_PER_CHUNK
        assert stats.peak_buffer_bytes <= 2 * chunk_payload
        assert traced_peak <= 2 * chunk_payload
        with open_indexable(converted) as handle:
            assert handle.get_sample(4095).payload[:8] == (4095).to_bytes(8, "little")
        assert sum(1 for _ in iterate_stream(converted)) == self.SAMPLES
