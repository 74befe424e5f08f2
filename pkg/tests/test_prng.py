from collections import Counter

import pytest

from shuffle_loader.prng import MASK64, SplitMix64, Xoshiro256StarStar, epoch_seed, mix64


class TestSplitMix64:
    """The seeding generator."""

    def test_reference_output(self):
        """Test the first output of the reference SplitMix64 seeded with 0"""
        assert SplitMix64(0).next_u64() == 0xE220A8397B1DCDAF

    def test_outputs_are_64_bit(self):
        """Test that outputs stay within 64 bits"""
        gen = SplitMix64(MASK64)
        for _ in range(100):
            assert 0 <= gen.next_u64() <= MASK64


class TestXoshiro:
    """xoshiro256** draws."""

    def test_deterministic(self):
        """Test that equal seeds give equal streams"""
        a, b = Xoshiro256StarStar(42), Xoshiro256StarStar(42)
        assert [a.next_u64() for _ in range(20)] == [b.next_u64() for _ in range(20)]

    def test_seeds_differ(self):
        """Test that different seeds give different streams"""
        a, b = Xoshiro256StarStar(1), Xoshiro256StarStar(2)
        assert [a.next_u64() for _ in range(5)] != [b.next_u64() for _ in range(5)]

    @pytest.mark.parametrize("bound", [1, 2, 3, 7, 1000, 2**63 + 5])
    def test_below_range(self, bound):
        """Test that bounded draws stay in [0, bound)"""
        gen = Xoshiro256StarStar(7)
        for _ in range(200):
            assert 0 <= gen.below(bound) < bound

    def test_below_is_roughly_uniform(self):
        """Test that every value of a small bound is drawn about equally often"""
        gen = Xoshiro256StarStar(3)
        counts = Counter(gen.below(6) for _ in range(60000))
        assert set(counts) == set(range(6))
        assert all(9000 < c < 11000 for c in counts.values())

    def test_below_rejects_non_positive(self):
        """Test that a bound of 0 is an argument error"""
        with pytest.raises(ValueError):
            Xoshiro256StarStar(0).below(0)


class TestEpochSeed:
    """Per-epoch seed derivation."""

    def test_epochs_get_distinct_seeds(self):
        """Test that epochs of one seed get distinct seeds"""
        seeds = {epoch_seed(1234, epoch) for epoch in range(1000)}
        assert len(seeds) == 1000

    def test_epoch_zero_is_mixed_seed(self):
        """Test the epoch 0 convention"""
        assert epoch_seed(99, 0) == mix64(99)

    def test_mix64_is_bijective_on_sample(self):
        """Test that distinct inputs give distinct outputs"""
        values = [mix64(v) for v in range(10000)]
        assert len(set(values)) == len(values)
