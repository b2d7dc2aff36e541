"""
Counter-based seed splitting for reproducible parallel trials.

Every random draw in the package comes from a numpy Generator whose
seed is derived from (run seed, experiment id, m, trial, stream name)
with a SplitMix64 mixing step, so results never depend on scheduling.
"""

import hashlib

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15


def splitmix64(state):
    """
    Advance a SplitMix64 state by one step.

    Args:
        state: 64-bit integer state

    Returns:
        Tuple of (next_state, output)
    """
    state = (state + GOLDEN_GAMMA) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return state, z ^ (z >> 31)


def key_to_int(key):
    """Map an int or string stream key to a 64-bit integer."""
    if isinstance(key, (int, np.integer)):
        return int(key) & MASK64
    digest = hashlib.blake2b(str(key).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


class StreamSplitter:
    """Derive independent, named random streams from one run seed."""

    def __init__(self, seed):
        """
        Initialize splitter.

        Args:
            seed: Run seed (any non-negative integer, reduced mod 2^64)
        """
        if int(seed) < 0:
            raise ValueError(f"Seed must be non-negative, got {seed}")
        self.seed = int(seed) & MASK64

    def seed_for(self, *keys):
        """
        Derive the 64-bit seed of the stream named by keys.

        Args:
            *keys: Sequence of ints / strings, e.g. ("inconsistency", 4096, 7)

        Returns:
            64-bit integer seed
        """
        _, out = splitmix64(self.seed)
        for key in keys:
            _, out = splitmix64(out ^ key_to_int(key))
        return out

    def generator(self, *keys):
        """Return a PCG64-backed numpy Generator for the named stream."""
        return np.random.Generator(np.random.PCG64(self.seed_for(*keys)))
