"""Counter-based random streams keyed by (seed, index).

Stream ``(seed, i)`` is a Philox generator whose 128-bit key is the pair
(scrambled seed, i), so any subset of streams can be regenerated in any order
or on any worker without touching the others.
"""

from __future__ import annotations

import numpy as np


def _seed_word(seed: int) -> np.uint64:
    if int(seed) < 0:
        raise ValueError(f"seed must be nonnegative, got {seed}")
    return np.random.SeedSequence(int(seed)).generate_state(1, dtype=np.uint64)[0]


def make_stream(seed: int, index: int) -> np.random.Generator:
    key = np.array([_seed_word(seed), np.uint64(index)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def stream_factory(seed: int):
    """Return ``index -> Generator`` with the seed scrambling done once."""
    word = _seed_word(seed)

    def stream(index: int) -> np.random.Generator:
        key = np.array([word, np.uint64(index)], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    return stream


def derive_seed(seed: int, index: int) -> int:
    """A child seed for row ``index`` of a sweep run under ``seed``."""
    state = np.random.SeedSequence([int(seed), int(index)]).generate_state(2, dtype=np.uint32)
    return int(state[0]) << 32 | int(state[1])
