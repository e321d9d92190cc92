"""
Seedable PRNG contract

Every random stream is a numpy PCG64 generator. Per-sample and per-purpose seeds are
derived with the SplitMix64 finaliser, so sample k of a batch depends only on
(seed, k) and never on thread count or execution order:

    derive_seed(seed, k) = splitmix64(splitmix64(seed) XOR k)
    stream_seed(seed, label) = derive_seed(seed, 2**32 + crc32(label))

The mix is part of the reproducibility contract and must not change between versions.
"""

import zlib

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15


def splitmix64(state: int) -> int:
    """One SplitMix64 step applied to `state` (64-bit wraparound arithmetic)"""
    z = (state + GOLDEN_GAMMA) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, index: int) -> int:
    return splitmix64(splitmix64(seed & MASK64) ^ (index & MASK64))


def stream_seed(seed: int, label: str) -> int:
    """Independent stream for a named purpose, e.g. 'lpp' vs 'wishart'"""
    return derive_seed(seed, (1 << 32) + zlib.crc32(label.encode("utf-8")))


def make_generator(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed & MASK64))


def uniform_open(gen: np.random.Generator, shape) -> np.ndarray:
    """Uniforms in [0, 1); `Generator.random` never returns 1.0"""
    return gen.random(shape)
