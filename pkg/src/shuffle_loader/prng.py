"""Portable 64-bit pseudo-random generation.

Shuffles must be reproducible across runs, platforms and implementations, so
the generator is fixed here instead of borrowed from `random` or numpy:
SplitMix64 expands a seed into the state of a xoshiro256** generator, and
bounded draws use Lemire's multiply-shift with rejection (no modulo bias).
"""

MASK64 = 0xFFFFFFFFFFFFFFFF
GOLDEN_GAMMA = 0x9E3779B97F4A7C15


def mix64(value: int) -> int:
    """SplitMix64 finalizer: a bijective 64-bit avalanche mix."""
    z = value & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


class SplitMix64:
    """The SplitMix64 sequence, used only to seed xoshiro256**."""

    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next_u64(self) -> int:
        """Advance and return the next 64-bit output."""
        self.state = (self.state + GOLDEN_GAMMA) & MASK64
        return mix64(self.state)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & MASK64


class Xoshiro256StarStar:
    """xoshiro256** 1.0 generator seeded through SplitMix64."""

    def __init__(self, seed: int):
        seeder = SplitMix64(seed)
        self._s = [seeder.next_u64() for _ in range(4)]

    def next_u64(self) -> int:
        """Return the next 64-bit output."""
        s = self._s
        result = (_rotl((s[1] * 5) & MASK64, 7) * 9) & MASK64
        t = (s[1] << 17) & MASK64
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        return result

    def below(self, bound: int) -> int:
        """Uniform integer in [0, bound)."""
        if bound <= 0:
            raise ValueError(f"bound must be positive, got {bound}")
        m = self.next_u64() * bound
        low = m & MASK64
        if low < bound:
            threshold = ((1 << 64) - bound) % bound
            while low < threshold:
                m = self.next_u64() * bound
                low = m & MASK64
        return m >> 64


EPOCH_MULTIPLIER = 0xD1342543DE82EF95


def epoch_seed(seed: int, epoch: int) -> int:
    """Decorrelated per-epoch seed: mix64(seed XOR (epoch * odd constant))."""
    return mix64((seed & MASK64) ^ ((epoch * EPOCH_MULTIPLIER) & MASK64))
