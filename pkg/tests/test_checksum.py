import pytest

from shuffle_loader.checksum import ChecksumKind, blake2b64, fnv1a64


class TestFnv1a64:
    """Published FNV-1a 64 test vectors."""

    @pytest.mark.parametrize(
        "data, expected",
        [
            (b"", 0xCBF29CE484222325),
            (b"a", 0xAF63DC4C8601EC8C),
            (b"foobar", 0x85944171F73967E8),
        ],
    )
    def test_vectors(self, data, expected):
        """Test known hash values"""
        assert fnv1a64(data) == expected

    def test_single_bit_flip_changes_hash(self):
        """Test that flipping one bit changes the hash"""
        data = bytearray(b"chunk payload" * 10)
        before = fnv1a64(bytes(data))
        data[7] ^= 0x01
        assert fnv1a64(bytes(data)) != before


class TestChecksumKind:
    """Algorithm registry."""

    def test_from_string(self):
        """Test parsing labels with loose spelling"""
        assert ChecksumKind.from_string("fnv1a64") is ChecksumKind.FNV1A_64
        assert ChecksumKind.from_string("FNV-1a-64") is ChecksumKind.FNV1A_64
        assert ChecksumKind.from_string("blake2b_64") is ChecksumKind.BLAKE2B_64

    def test_unknown_name(self):
        """Test that unknown algorithms are rejected with the accepted names"""
        with pytest.raises(ValueError, match="blake2b64, fnv1a64"):
            ChecksumKind.from_string("crc32")

    def test_compute_dispatches(self):
        """Test that each kind computes its own algorithm"""
        data = b"0123456789"
        assert ChecksumKind.FNV1A_64.compute(data) == fnv1a64(data)
        assert ChecksumKind.BLAKE2B_64.compute(data) == blake2b64(data)
        assert 0 <= blake2b64(data) < 2**64

    def test_labels_round_trip(self):
        """Test that every label parses back to its kind"""
        for kind in ChecksumKind:
            assert ChecksumKind.from_string(kind.label) is kind
