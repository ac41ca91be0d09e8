"""Counter-based random streams derived from one experiment seed.

Every consumer asks for a stream by integer keys (``make_rng(seed, INIT)``,
``make_rng(seed, SWEEP, cell)``) so streams are independent of the order
in which they are created.
"""

import numpy as np

INIT = 0
COLLOCATION = 1
SHUFFLE = 2
SWEEP = 3


def make_rng(seed: int, *keys: int) -> np.random.Generator:
    sequence = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(sequence))


def derive_seed(seed: int, *keys: int) -> int:
    """A 63-bit child seed, for sweep cells and other sub-runs."""
    sequence = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return int(sequence.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
