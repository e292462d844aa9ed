"""Counter-based random streams keyed by a master seed and a path of integers."""

import secrets

import numpy as np

GENERATOR_NAME = "Philox"

# Stream path prefixes; every randomized stage draws from its own substream.
STREAM_LOADINGS = 1
STREAM_REPLICATION = 2
STREAM_RANK_BOOTSTRAP = 3
STREAM_SIGN_BOOTSTRAP = 4


def generator(seed: int, *path: int) -> np.random.Generator:
    """Philox generator for the substream (seed, *path)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *map(int, path)])))


def fresh_seed() -> int:
    """A new master seed for runs that were not given one."""
    return secrets.randbits(63)


def derive_seed(seed: int, *path: int) -> int:
    """Child master seed for the substream (seed, *path)."""
    state = np.random.SeedSequence([int(seed), *map(int, path)]).generate_state(2, dtype=np.uint32)
    return int(state[0]) << 31 | int(state[1]) >> 1
