"""Deterministic seed derivation for every random component.

One master seed fans out into fixed, named streams so that runs are
reproducible end to end and changing one consumer (say, the active learning
sampler) never shifts the randomness seen by another.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

# Fixed stream indices; appending new names is safe, reordering is not.
STREAM_NAMES = (
    "init",
    "sampling",
    "dropout",
    "target",
    "finetune",
    "active_learning",
)
_STREAM_INDEX = {name: i for i, name in enumerate(STREAM_NAMES)}


@dataclass(frozen=True)
class SeedPlan:
    """Derives named, independent random streams from one master seed."""

    master_seed: int

    def sequence(self, stream: str) -> np.random.SeedSequence:
        if stream not in _STREAM_INDEX:
            raise KeyError(f"unknown seed stream {stream!r}, expected one of {STREAM_NAMES}")
        return np.random.SeedSequence(self.master_seed, spawn_key=(_STREAM_INDEX[stream],))

    def numpy_rng(self, stream: str) -> np.random.Generator:
        return np.random.default_rng(self.sequence(stream))

    def integer_seed(self, stream: str) -> int:
        """A single 63-bit seed for components that take a plain int."""
        return int(self.sequence(stream).generate_state(1, dtype=np.uint64)[0] >> 1)

    def torch_generator(self, stream: str) -> torch.Generator:
        gen = torch.Generator()
        gen.manual_seed(self.integer_seed(stream))
        return gen


def spawn_integer_seeds(seed: int, n: int) -> list[int]:
    """Split one integer seed into n independent integer seeds."""
    children = np.random.SeedSequence(seed).spawn(n)
    return [int(c.generate_state(1, dtype=np.uint64)[0] >> 1) for c in children]
