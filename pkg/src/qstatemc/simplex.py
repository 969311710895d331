"""Uniform sampling over the basic probability simplex."""

from __future__ import annotations

import numpy as np


def sample_simplex_exponential(K: int, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Normalized unit-rate exponentials, i.e. Dirichlet(1, ..., 1)."""
    if K < 2:
        raise ValueError("need at least two outcomes")
    shape = (K,) if size is None else (size, K)
    # 1 - random() lies in (0, 1]; -log of it is finite and nonnegative
    y = -np.log1p(-rng.random(shape))
    return y / y.sum(axis=-1, keepdims=True)


def spacings(x) -> np.ndarray:
    """Gaps between sorted points of [0, 1], with 0 and 1 as end points."""
    x = np.sort(np.asarray(x, dtype=float), axis=-1)
    lead = x.shape[:-1]
    edges = np.concatenate([np.zeros(lead + (1,)), x, np.ones(lead + (1,))], axis=-1)
    return np.diff(edges, axis=-1)


def sample_simplex_spacings(K: int, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Spacings of K - 1 sorted uniforms on (0, 1)."""
    if K < 2:
        raise ValueError("need at least two outcomes")
    shape = (K - 1,) if size is None else (size, K - 1)
    return spacings(rng.random(shape))
