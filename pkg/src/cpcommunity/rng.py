"""Seed handling shared by every stochastic routine.

All public entry points take a 64-bit unsigned seed.  Two derivations are used:

* ``split_seed(seed, index)`` gives the seed of trial ``index`` in a campaign.  It is
  ``SeedSequence(seed, spawn_key=(index,))`` folded to one 64-bit word, so trial
  results never depend on which worker ran the trial or in what order.
* ``kernel_seed(seed)`` folds a 64-bit seed to the 32-bit seed accepted by the
  compiled kernels' generator (numba's Mersenne Twister).
"""

import numpy as np

SEED_MAX = 2**64 - 1


def check_seed(seed):
    seed = int(seed)
    if not 0 <= seed <= SEED_MAX:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed


def split_seed(seed, index):
    """Deterministic child seed number ``index`` of ``seed``."""
    ss = np.random.SeedSequence(check_seed(seed), spawn_key=(int(index),))
    return int(ss.generate_state(1, np.uint64)[0])


def kernel_seed(seed):
    ss = np.random.SeedSequence(check_seed(seed))
    return int(ss.generate_state(1, np.uint32)[0])


def generator(seed):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(check_seed(seed))))
