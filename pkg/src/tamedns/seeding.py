"""Counter-based seed derivation.

A replica's stream is ``SeedSequence(master, spawn_key=(stream, index))``:
it depends only on the master seed and its own coordinates, never on the
order in which replicas are scheduled.
"""

import numpy as np


def replica_seed(master: int, index: int, stream: int = 0) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(master), spawn_key=(int(stream), int(index)))


def as_generator(seed) -> np.random.Generator:
    """Accept an int, a SeedSequence, a Generator or None."""
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.PCG64(seed))
    return np.random.default_rng(seed)


def describe(seed):
    """JSON-friendly description of a seed for manifests and logs."""
    if isinstance(seed, np.random.SeedSequence):
        return {"entropy": int(seed.entropy), "spawn_key": [int(x) for x in seed.spawn_key]}
    if isinstance(seed, (int, np.integer)):
        return int(seed)
    return None
