"""Derived seeds for independent random streams.

Every stream (model init, replay, eval repetition r, ...) gets its own
generator seeded from (base_seed, stream tag...) so streams never alias and
runs replay bit-for-bit.
"""
from __future__ import annotations

import numpy as np
import torch

def derive_seed(*parts: int) -> int:
    """Stable 64-bit seed from a tuple of integers."""
    state = np.random.SeedSequence(entropy=[int(p) for p in parts]).generate_state(2, dtype=np.uint32)
    return int(state[0]) | (int(state[1]) << 32)


def torch_generator(*parts: int) -> torch.Generator:
    gen = torch.Generator()
    gen.manual_seed(derive_seed(*parts))
    return gen


def numpy_rng(*parts: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=[int(p) for p in parts]))
