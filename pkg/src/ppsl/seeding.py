"""Deterministic seed derivation for all random streams.

Every stochastic component draws from its own named stream derived from the
master run seed, so commands replay bit-identically and per-query work is
independent of evaluation order.
"""

import numpy as np
import torch

# Fixed stream ids; never renumber, checkpoints and results depend on them.
STREAM_SYNTH = 0
STREAM_SPLIT = 1
STREAM_ENCODER = 2
STREAM_AGENT = 3
STREAM_PROMPT = 4
STREAM_QUERY = 5


def seed_sequence(*keys: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(list(keys))


def numpy_rng(*keys: int) -> np.random.Generator:
    return np.random.default_rng(seed_sequence(*keys))


def torch_generator(*keys: int) -> torch.Generator:
    state = seed_sequence(*keys).generate_state(1, dtype=np.uint64)[0]
    gen = torch.Generator(device="cpu")
    gen.manual_seed(int(state))
    return gen
