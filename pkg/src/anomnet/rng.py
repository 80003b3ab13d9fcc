"""Keyed random streams.

Every stream is a numpy ``PCG64`` bit generator seeded from
``SeedSequence(entropy=seed, spawn_key=(purpose, *key))``. The raw 64-bit
output of PCG64 for a given SeedSequence is covered by numpy's stream
compatibility guarantee, so anything built only on ``random_raw`` (the year
permutations) is stable across numpy versions. Normal deviates come from
``Generator.standard_normal`` and are stable in practice but not guaranteed.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1

# purpose tags keep streams for different jobs disjoint
SHUFFLE = 1
SYNTH_FIELD = 2
SYNTH_EVENTS = 3


def seed_sequence(seed: int, purpose: int, *key: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=int(seed) & MASK64, spawn_key=(purpose, *key))


def bit_generator(seed: int, purpose: int, *key: int) -> np.random.PCG64:
    return np.random.PCG64(seed_sequence(seed, purpose, *key))


def generator(seed: int, purpose: int, *key: int) -> np.random.Generator:
    return np.random.Generator(bit_generator(seed, purpose, *key))


def _bounded(bitgen: np.random.PCG64, bound: int) -> int:
    """Uniform integer in [0, bound) by rejection on raw 64-bit draws."""
    limit = ((1 << 64) // bound) * bound
    while True:
        r = int(bitgen.random_raw())
        if r < limit:
            return r % bound


def permutation(n: int, seed: int, purpose: int, *key: int) -> np.ndarray:
    """Uniform random permutation of ``range(n)`` (Fisher-Yates, raw draws)."""
    bitgen = bit_generator(seed, purpose, *key)
    perm = list(range(n))
    for i in range(n - 1, 0, -1):
        j = _bounded(bitgen, i + 1)
        perm[i], perm[j] = perm[j], perm[i]
    return np.asarray(perm, dtype=np.int64)


def random_seed() -> int:
    """Fresh 63-bit seed from OS entropy, for runs that did not pin one."""
    return int(np.random.SeedSequence().entropy) & ((1 << 63) - 1)
