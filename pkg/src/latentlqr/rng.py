"""Deterministic random-stream derivation for reproducible simulation.

Every source of randomness is a named substream keyed by
(base seed, role, time index). A block of standard normal draws for all
trajectories at one (role, time) is generated in a single call; trajectory
i always reads row i of that block. Because the generator fills arrays in
a fixed element order, row i is identical no matter how many trajectories
are requested or how collection is scheduled, which is what makes batched
and paired-seed runs reproducible.
"""
from __future__ import annotations

import numpy as np

# Noise roles inside a rollout.
ROLE_INIT_STATE = 0
ROLE_PROCESS = 1
ROLE_INPUT = 2

# Tags for deriving independent child seeds for the learning stages.
TAG_PHASE1 = 11
TAG_PHASE3_LOOP = 31
TAG_PHASE3_INIT = 32
TAG_EVAL = 41
TAG_INSTANCE = 51


def noise_block(base_seed: int, role: int, time: int, n: int, dim: int) -> np.ndarray:
    """Standard normal block of shape (n, dim) for one (role, time) substream.

    Row i depends only on (base_seed, role, time, i), never on n.
    """
    if dim == 0:
        return np.zeros((n, 0))
    seq = np.random.SeedSequence(entropy=base_seed, spawn_key=(role, time))
    return np.random.default_rng(seq).standard_normal((n, dim))


def derive_seed(base_seed: int, *tags: int) -> int:
    """Derive an independent 64-bit child seed from a base seed and integer tags."""
    seq = np.random.SeedSequence(entropy=base_seed, spawn_key=tuple(tags))
    return int(seq.generate_state(1, np.uint64)[0])


def generator(base_seed: int, *tags: int) -> np.random.Generator:
    """A plain Generator on a named substream, for non-rollout sampling."""
    seq = np.random.SeedSequence(entropy=base_seed, spawn_key=tuple(tags))
    return np.random.default_rng(seq)
