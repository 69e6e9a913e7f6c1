import numpy as np


def as_generator(seed):
    """Return a ``numpy.random.Generator`` from an int, SeedSequence or Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def as_seed_sequence(seed):
    if isinstance(seed, np.random.SeedSequence):
        return seed
    if isinstance(seed, np.random.Generator):
        # draw entropy from the generator so the caller's stream advances
        return np.random.SeedSequence(int(seed.integers(2**63)))
    return np.random.SeedSequence(seed)


def spawn(seed, count):
    """Split ``seed`` into ``count`` independent child seed sequences.

    The split is fixed by the master seed, so results do not depend on the
    order or the process in which the children are consumed.
    """
    return as_seed_sequence(seed).spawn(count)
