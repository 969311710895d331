"""Unnormalized log target densities over probability vectors.

The quantum-constraint indicator is *not* part of these densities; samplers
apply it separately through :mod:`qstatemc.physicality`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PRIOR_KINDS = ("primitive", "jeffreys")
TARGET_KINDS = ("prior-primitive", "prior-jeffreys", "posterior-primitive", "posterior-jeffreys")


@dataclass(frozen=True, eq=False)
class Dataset:
    """Click counts ``n_k`` for each outcome of a POM."""

    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.ndim != 1:
            raise ValueError("counts must be one-dimensional")
        if np.any(counts < 0) or not np.all(np.equal(np.mod(counts, 1), 0)):
            raise ValueError("counts must be nonnegative integers")
        counts = counts.astype(np.int64)
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @classmethod
    def parse(cls, text: str) -> "Dataset":
        """Parse a comma-separated count list such as ``"11,4,5"``."""
        try:
            values = [int(v) for v in text.replace(" ", "").split(",") if v != ""]
        except ValueError:
            raise ValueError(f"cannot parse counts from {text!r}") from None
        return cls(np.array(values))

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def frequencies(self) -> np.ndarray:
        return self.counts / self.total

    def __len__(self):
        return len(self.counts)

    def __str__(self):
        return ",".join(str(int(c)) for c in self.counts)


def log_likelihood(p, data: Dataset):
    """sum_k n_k ln p_k with 0 ln 0 = 0; -inf when a clicked outcome has p_k = 0."""
    p = np.asarray(p, dtype=float)
    if p.shape[-1] != len(data):
        raise ValueError(f"probability vector has {p.shape[-1]} entries, data has {len(data)}")
    n = data.counts
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(n > 0, n * np.log(p), 0.0)
    value = terms.sum(axis=-1)
    return float(value) if value.ndim == 0 else value


def log_prior(p, kind: str = "primitive"):
    """0 for the primitive prior; -(1/2) sum ln p_k for Jeffreys (+inf on faces)."""
    p = np.asarray(p, dtype=float)
    if kind == "primitive":
        value = np.zeros(p.shape[:-1])
    elif kind == "jeffreys":
        with np.errstate(divide="ignore"):
            value = -0.5 * np.log(p).sum(axis=-1)
    else:
        raise ValueError(f"unknown prior kind {kind!r}")
    return float(value) if value.ndim == 0 else value


def log_posterior(p, data: Dataset, prior_kind: str = "primitive"):
    ll = np.asarray(log_likelihood(p, data))
    lp = np.asarray(log_prior(p, prior_kind))
    # a zero p_k with n_k >= 1 beats the Jeffreys singularity p_k^(-1/2)
    value = np.where(np.isneginf(ll), -np.inf, ll + np.where(np.isneginf(ll), 0.0, lp))
    return float(value) if value.ndim == 0 else value


@dataclass(frozen=True)
class TargetDensity:
    """Prior or posterior log-density ``ln w(p)``, excluding the quantum constraint."""

    kind: str
    data: Dataset | None = None

    def __post_init__(self):
        if self.kind not in TARGET_KINDS:
            raise ValueError(f"unknown target kind {self.kind!r}; choose from {TARGET_KINDS}")
        if self.is_posterior:
            if self.data is None:
                raise ValueError(f"target {self.kind!r} needs a dataset")
            if self.data.total <= 0:
                raise ValueError("posterior targets need at least one count")

    @property
    def is_posterior(self) -> bool:
        return self.kind.startswith("posterior")

    @property
    def prior_kind(self) -> str:
        return self.kind.split("-", 1)[1]

    def log_density(self, p):
        if self.is_posterior:
            return log_posterior(p, self.data, self.prior_kind)
        return log_prior(p, self.prior_kind)

    __call__ = log_density

    def default_log_cap(self, n_outcomes: int) -> float:
        """Cutoff for the Jeffreys singularity used by rejection sampling."""
        return 0.5 * n_outcomes * np.log(n_outcomes * 1e3)


def log_ratio_r(p, target: TargetDensity):
    """ln r(p) against the uniform reference on the basic simplex (w_qu excluded)."""
    return target.log_density(p)
