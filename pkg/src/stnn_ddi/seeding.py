"""Independent random streams derived from one global seed."""
import numpy as np

INIT = 1
SHUFFLE = 2
SPLIT = 3
NEG_TRAIN = 4
NEG_TEST = 5
PLANTED = 6


def stream(seed: int, purpose: int, *extra: int) -> np.random.Generator:
    """Generator keyed by ``(seed, purpose, *extra)``; streams never overlap."""
    return np.random.default_rng([int(seed), purpose, *map(int, extra)])
