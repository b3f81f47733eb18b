"""
Seed Derivation

All randomness in a pipeline run flows from one root seed. Each stage gets
its own stream by hashing the root seed together with a stage name, so adding
or reordering stages never shifts another stage's random numbers.
"""

import hashlib
from contextlib import contextmanager

import numpy as np
import torch


def derive_seed(root_seed: int, name: str) -> int:
    """
    Derive a 63-bit child seed from a root seed and a stream name.

    Args:
        root_seed: Root seed from the pipeline config
        name: Stream name (e.g., 'dataset', 'train', 'genmask')

    Returns:
        Non-negative integer seed
    """
    digest = hashlib.sha256(f"{int(root_seed)}:{name}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def numpy_rng(*entropy: int) -> np.random.Generator:
    """Numpy generator seeded from a tuple of integers (order matters)."""
    return np.random.default_rng(np.random.SeedSequence([int(e) for e in entropy]))


def torch_generator(seed: int) -> torch.Generator:
    """CPU torch generator seeded with `seed`."""
    gen = torch.Generator(device="cpu")
    gen.manual_seed(int(seed) & 0x7FFF_FFFF_FFFF_FFFF)
    return gen


@contextmanager
def seeded_torch(seed: int):
    """
    Run a block under a fixed global torch seed without leaking state.

    Module constructors draw their initial weights from the global generator;
    forking keeps model initialization reproducible and side-effect free.
    """
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(int(seed) & 0x7FFF_FFFF_FFFF_FFFF)
        yield
