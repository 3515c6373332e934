"""Single seeding scheme shared by every random component.

All randomness in this package flows through numpy's PCG64 bit generator.
Derived streams (per boosting round, per forest tree, per benchmark model)
are spawned by appending integer stream keys to the master seed, so parallel
and serial execution orders produce identical numbers.
"""

import numpy as np


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Return a PCG64 generator for ``seed`` plus an optional stream key.

    ``make_rng(s)`` is the root stream; ``make_rng(s, k)`` is the k-th
    derived stream (e.g. boosting round k or forest tree k). Entropy order
    matters, so (seed=1, stream=2) and (seed=2, stream=1) differ.
    """
    if seed < 0:
        raise ValueError(f"seed must be a non-negative integer, got {seed}")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, *stream])))


def derive_seed(seed: int, index: int) -> int:
    """Collapse (master seed, index) into one integer sub-seed.

    Used where a component takes a scalar seed of its own (e.g. each model
    in a benchmark run gets the sub-seed of its position).
    """
    return int(np.random.SeedSequence([seed, index]).generate_state(1, np.uint64)[0])
