# dprag/seeding.py
"""
Seed derivation. All randomness of a run flows from one 64-bit seed:

- ``question_seed(base, question_index, repetition)`` gives the seed of one run
  inside a sweep (or one MIA query);
- ``run_rng(seed)`` builds the run's generator, from which ``run_streams``
  spawns the per-purpose children in a fixed order:
  partition, svt, selection.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np


class RunStreams(NamedTuple):
    partition: np.random.Generator
    svt: np.random.Generator
    selection: np.random.Generator


def derive_seed(base_seed: int, *keys: int) -> int:
    state = np.random.SeedSequence([int(base_seed), *map(int, keys)]).generate_state(1, dtype=np.uint64)
    return int(state[0])


def question_seed(base_seed: int, question_index: int, repetition: int = 0) -> int:
    return derive_seed(base_seed, question_index, repetition)


def run_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(int(seed))


def run_streams(rng: np.random.Generator) -> RunStreams:
    partition, svt, selection = rng.spawn(3)
    return RunStreams(partition=partition, svt=svt, selection=selection)
