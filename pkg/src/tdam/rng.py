"""Seed plumbing: every stochastic component draws from a named substream.

A run has one user-facing seed. Components (cohort synthesis, parameter init,
dropout, fold shuffling, bootstrap) derive independent generators from
``(seed, name, *extra)`` so that rerunning any single component in isolation
reproduces exactly what the full pipeline did.
"""

from __future__ import annotations

import zlib

import numpy as np

__all__ = ["substream", "stream_seed"]


def stream_seed(seed: int, name: str, *extra: int) -> np.random.SeedSequence:
    key = zlib.crc32(name.encode("utf-8"))
    return np.random.SeedSequence([int(seed), key, *map(int, extra)])


def substream(seed: int, name: str, *extra: int) -> np.random.Generator:
    """Deterministic generator for the substream ``name`` of run ``seed``."""
    return np.random.default_rng(stream_seed(seed, name, *extra))
