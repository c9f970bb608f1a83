"""Deterministic random streams.

All randomness in the library flows from one top-level integer seed through
named substreams, so results never depend on call order or scheduling. The
generator is numpy's PCG64, a portable 64-bit generator with a stable,
documented bit stream.
"""
from __future__ import annotations

import numpy as np

# Stream codes are part of the reproducibility contract; do not renumber.
STREAMS = {
    "kernel-mc": 1,  # Monte Carlo vphi estimates for Custom activations
    "trials": 2,     # sensitivity trials and experiment repeats
    "init": 3,       # finite-network weight and state initialization
    "windows": 4,    # dataset series noise and window draws
}


def substream(seed: int, stream: str, *indices: int) -> np.random.Generator:
    """Generator for (seed, stream, indices); identical inputs replay exactly."""
    code = STREAMS[stream]
    key = (code,) + tuple(int(i) for i in indices)
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=key))


def derive_seed(seed: int, stream: str, *indices: int) -> int:
    """Integer child seed for components that take a seed rather than a
    generator (ensemble members, per-pair Monte Carlo)."""
    code = STREAMS[stream]
    key = (code,) + tuple(int(i) for i in indices)
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=key)
    return int(ss.generate_state(1, dtype=np.uint64)[0])
