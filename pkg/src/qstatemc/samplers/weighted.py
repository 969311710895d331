from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class WeightedSample:
    """Probability vectors with nonnegative weights.

    ``chain`` holds the index of the Markov chain (or batch) each point came
    from; ``meta`` carries the provenance of the run.
    """

    points: np.ndarray
    weights: np.ndarray
    chain: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.shape != (len(self.points),):
            raise ValueError("need exactly one weight per point")
        if np.any(self.weights < 0):
            raise ValueError("weights must be nonnegative")
        if self.chain is not None:
            self.chain = np.asarray(self.chain, dtype=np.int64)

    def __len__(self):
        return len(self.points)

    @property
    def n_outcomes(self) -> int:
        return self.points.shape[1]

    @property
    def unit_weights(self) -> bool:
        return bool(np.all(self.weights == 1.0))

    @property
    def ess(self) -> float:
        """Kish effective sample size (sum w)^2 / sum w^2."""
        w = self.weights
        s2 = np.dot(w, w)
        return float(w.sum() ** 2 / s2) if s2 > 0 else 0.0

    @classmethod
    def merge(cls, samples) -> "WeightedSample":
        """Concatenate samples in order; chain labels are offset to stay distinct."""
        samples = list(samples)
        if not samples:
            raise ValueError("nothing to merge")
        chains, offset = [], 0
        for s in samples:
            c = s.chain if s.chain is not None else np.zeros(len(s), dtype=np.int64)
            chains.append(c + offset)
            offset += int(c.max()) + 1 if len(c) else 1
        meta = dict(samples[0].meta)
        meta["merged_from"] = len(samples)
        return cls(
            np.concatenate([s.points for s in samples]),
            np.concatenate([s.weights for s in samples]),
            np.concatenate(chains),
            meta,
        )
