"""Order-independent per-image random streams.

Every synthesized image gets its own generator seeded by mixing the run seed
with the image index through the SplitMix64 finalizer, so images can be
produced in any order or in parallel and still come out identical.
"""
import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15


def splitmix64_mix(z: int) -> int:
    """SplitMix64 output finalizer (Stafford variant 13)."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, index: int) -> int:
    base = splitmix64_mix((seed & MASK64) + GOLDEN_GAMMA)
    return splitmix64_mix(base + ((index & MASK64) + 1) * GOLDEN_GAMMA)


def image_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive_seed(seed, index)))
