"""Post-processing of samples: region sizes and credibilities, purity
marginals, and separable fractions."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .densities import Dataset, log_likelihood
from .physicality import AscentConfig, maximize_likelihood
from .quantum import Pom, is_ppt_separable, purity, reconstruct_ic
from .samplers.weighted import WeightedSample

log = logging.getLogger(__name__)

DEFAULT_LAMBDAS = np.linspace(0.0, 1.0, 21)
DEFAULT_BINS = 40
MIN_BATCHES = 30


@dataclass(frozen=True)
class RegionPredicate:
    """Named membership test on an ``(n, K)`` array of probability vectors."""

    test: Callable[[np.ndarray], np.ndarray]
    name: str = "region"

    def __call__(self, points):
        return np.asarray(self.test(np.atleast_2d(points)), dtype=bool)


EVERYTHING = RegionPredicate(lambda P: np.ones(len(P), dtype=bool), "everything")
NOTHING = RegionPredicate(lambda P: np.zeros(len(P), dtype=bool), "nothing")


def _batch_ratio_se(indicator, weights, chain):
    """Standard error of a ratio estimate from batch means over chain segments."""
    labels = np.unique(chain)
    per_chain = max(1, -(-MIN_BATCHES // len(labels)))
    estimates = []
    for c in labels:
        sel = np.flatnonzero(chain == c)
        for part in np.array_split(sel, min(per_chain, len(sel))):
            w = weights[part]
            if w.sum() > 0:
                estimates.append(np.dot(w, indicator[part]) / w.sum())
    if len(estimates) < 2:
        return np.nan
    return float(np.std(estimates, ddof=1) / np.sqrt(len(estimates)))


def region_probability(sample: WeightedSample, region, weights=None):
    """Weighted fraction of the sample inside ``region`` and its standard error.

    Independent unit-weight samples use the binomial error; independent
    weighted samples the delta-method error of the ratio estimator; Markov
    chain samples use batch means, which accounts for autocorrelation.
    """
    if len(sample) == 0:
        raise ValueError("empty sample")
    w = sample.weights if weights is None else np.asarray(weights, dtype=float)
    total = w.sum()
    if total <= 0:
        raise ValueError("sample has zero total weight")
    inside = region(sample.points) if callable(region) else np.asarray(region, dtype=bool)
    inside = inside.astype(float)
    estimate = float(np.dot(w, inside) / total)
    if sample.meta.get("method") == "mcmc" and sample.chain is not None:
        return estimate, _batch_ratio_se(inside, w, sample.chain)
    if np.all(w == w[0]):
        n = len(w)
        return estimate, float(np.sqrt(estimate * (1 - estimate) / n))
    se = np.sqrt(np.sum(w**2 * (inside - estimate) ** 2)) / total
    return estimate, float(se)


@dataclass
class SizeCurve:
    """Prior (size) or posterior (credibility) content of likelihood-bounded regions."""

    lambdas: np.ndarray
    sizes: np.ndarray
    std_errors: np.ndarray
    logL_max: float
    meta: dict = field(default_factory=dict)

    def rows(self):
        return list(zip(self.lambdas.tolist(), self.sizes.tolist(), self.std_errors.tolist()))


def likelihood_region(data: Dataset, lam: float, logL_max: float) -> RegionPredicate:
    """Points with L(D|p) >= lam * L_max; lam = 0 is the whole space."""
    if lam <= 0:
        return RegionPredicate(EVERYTHING.test, "lambda=0")
    threshold = np.log(lam) + logL_max
    return RegionPredicate(lambda P: np.asarray(log_likelihood(P, data)) >= threshold,
                           f"lambda={lam:g}")


def _curve(sample, data, lambdas, logL_max, weights, meta):
    lambdas = np.asarray(lambdas, dtype=float)
    ll = np.asarray(log_likelihood(sample.points, data), dtype=float)
    sizes, errors = [], []
    for lam in lambdas:
        if lam <= 0:
            inside = np.ones(len(ll), dtype=bool)
        else:
            inside = ll >= np.log(lam) + logL_max
        s, e = region_probability(sample, inside, weights)
        if inside.all():
            s = 1.0
        sizes.append(s)
        errors.append(e)
    return SizeCurve(lambdas, np.array(sizes), np.array(errors), logL_max, meta)


def size_curve(sample: WeightedSample, data: Dataset, pom: Pom, lambda_grid=None,
               cfg: AscentConfig | None = None, logL_max: float | None = None) -> SizeCurve:
    """s_lambda: prior content of {p : L(D|p) >= lambda L_max} from a prior sample."""
    if sample.meta.get("target", "prior").startswith("posterior"):
        log.warning("size_curve expects a prior sample, got target %s", sample.meta.get("target"))
    if logL_max is None:
        logL_max = maximize_likelihood(data, pom, cfg)[1]
    lambdas = DEFAULT_LAMBDAS if lambda_grid is None else lambda_grid
    meta = {"kind": "size", "data": str(data), **{k: sample.meta.get(k) for k in ("method", "target", "pom")}}
    return _curve(sample, data, lambdas, logL_max, None, meta)


def credibility_curve(sample: WeightedSample, data: Dataset, pom: Pom, lambda_grid=None,
                      cfg: AscentConfig | None = None, logL_max: float | None = None) -> SizeCurve:
    """Posterior content of the same regions.

    A prior sample is reweighted by L(D|p) / L_max; a sample already drawn
    from a posterior target is used as it is.
    """
    if logL_max is None:
        logL_max = maximize_likelihood(data, pom, cfg)[1]
    lambdas = DEFAULT_LAMBDAS if lambda_grid is None else lambda_grid
    meta = {"kind": "credibility", "data": str(data),
            **{k: sample.meta.get(k) for k in ("method", "target", "pom")}}
    if sample.meta.get("target", "").startswith("posterior"):
        weights = sample.weights
    else:
        ll = np.asarray(log_likelihood(sample.points, data), dtype=float)
        weights = sample.weights * np.exp(ll - logL_max)
    s2 = np.dot(weights, weights)
    ess = float(weights.sum() ** 2 / s2) if s2 > 0 else 0.0
    meta["ess"] = ess
    if ess < 10:
        meta["warning"] = f"effective sample size {ess:.1f} < 10"
        log.warning(meta["warning"])
    return _curve(sample, data, lambdas, logL_max, weights, meta)


# ---------------------------------------------------------------- purity

class PurityHistogram(NamedTuple):
    edges: np.ndarray
    density: np.ndarray
    std_error: np.ndarray
    counts: np.ndarray

    @property
    def centers(self):
        return 0.5 * (self.edges[1:] + self.edges[:-1])


def sample_purities(sample: WeightedSample, pom: Pom) -> np.ndarray:
    """Purity of the state behind each probability vector."""
    if pom.name == "tetra":
        return 6 * np.sum(sample.points**2, axis=1) - 1
    if not pom.is_informationally_complete:
        raise ValueError(f"purity needs an informationally complete POM, not {pom.name!r}")
    return purity(reconstruct_ic(sample.points, pom))


def purity_histogram(source, dim: int | None = None, pom: Pom | None = None,
                     bins: int = DEFAULT_BINS, weights=None) -> PurityHistogram:
    """Normalized histogram of the purity on [1/d, 1].

    ``source`` is a stack of density matrices, an array of purity values
    (then ``dim`` is required), or a :class:`WeightedSample` with its ``pom``.
    """
    if isinstance(source, WeightedSample):
        if pom is None:
            raise ValueError("a POM is needed to turn probabilities into purities")
        xi = sample_purities(source, pom)
        dim = pom.dim
        weights = source.weights if weights is None else weights
    else:
        arr = np.asarray(source)
        if arr.ndim == 3:
            xi = purity(arr)
            dim = arr.shape[-1]
        else:
            if dim is None:
                raise ValueError("dim is required for raw purity values")
            xi = arr.astype(float)
    w = np.ones(len(xi)) if weights is None else np.asarray(weights, dtype=float)
    lo = 1.0 / dim
    # roundoff can push pure states just above 1
    xi = np.clip(xi, lo, 1.0)
    edges = np.linspace(lo, 1.0, bins + 1)
    counts, _ = np.histogram(xi, bins=edges, weights=w)
    width = np.diff(edges)
    total = w.sum()
    density = counts / (total * width)
    w2, _ = np.histogram(xi, bins=edges, weights=w**2)
    frac = counts / total
    # binomial error for unit weights, delta method otherwise
    var = (w2 * (1 - frac) ** 2 + (np.sum(w**2) - w2) * frac**2) / total**2
    return PurityHistogram(edges, density, np.sqrt(var) / width, counts)


class UnsupportedRange(ValueError):
    """No closed form is known for the requested purity density range."""


@dataclass(frozen=True)
class PurityDensity:
    """Closed-form marginal density of the purity.

    Prior I draws the spectrum uniformly from the simplex (Haar eigenbasis);
    prior II is uniform in the probabilities of an informationally complete
    POM.  Only the low-purity branch is known for prior II with d = 3, 4, and
    it is returned unnormalized (``normalized`` is False).
    """

    prior: str
    dim: int

    def __post_init__(self):
        prior = str(self.prior).upper()
        if prior not in ("I", "II"):
            raise ValueError(f"prior must be 'I' or 'II', not {self.prior!r}")
        object.__setattr__(self, "prior", prior)
        if self.dim not in (2, 3, 4):
            raise ValueError("closed forms exist for d = 2, 3, 4 only")

    @property
    def support(self) -> tuple[float, float]:
        lo = 1.0 / self.dim
        if self.prior == "II" and self.dim == 3:
            return lo, 0.5
        if self.prior == "II" and self.dim == 4:
            return lo, 1.0 / 3
        return lo, 1.0

    @property
    def normalized(self) -> bool:
        return self.prior == "I" or self.dim == 2

    def __call__(self, xi):
        xi = np.asarray(xi, dtype=float)
        lo, hi = self.support
        eps = 1e-12
        if np.any(xi < 1.0 / self.dim - eps) or np.any(xi > 1 + eps):
            raise ValueError(f"purity outside [1/{self.dim}, 1]")
        if np.any(xi > hi + eps):
            raise UnsupportedRange(
                f"prior II, d = {self.dim}: closed form only known for purity <= {hi:.4g}"
            )
        xi = np.clip(xi, 1.0 / self.dim, 1.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            # roundoff leaves tiny negatives where the density vanishes
            value = np.maximum(_density(self.prior, self.dim, xi), 0.0)
        return float(value) if value.ndim == 0 else value


def _density(prior, d, xi):
    if prior == "II":
        if d == 2:
            return 3 * np.sqrt(2 * xi - 1)
        if d == 3:
            return (3 * xi - 1) ** 3
        return (4 * xi - 1) ** 6.5
    if d == 2:
        return 1 / np.sqrt(2 * xi - 1)
    if d == 3:
        arg = np.clip((3 * xi - 2) / (3 * xi - 1), -1, 1)
        return np.where(xi <= 0.5, 2 * np.pi / np.sqrt(3), np.sqrt(3) * (np.pi / 6 - np.arcsin(arg)))
    s = np.sqrt(np.clip(4 * xi - 1, 0, None))
    low = 3 * np.pi * s
    mid = 2 * np.sqrt(3) * np.pi - 3 * np.pi * s
    # the two printed branches on [1/2, 1] are added
    a = np.clip((3 * xi - 2) / (3 * xi - 1), -1, 1)
    b = np.clip(xi / (3 * xi - 1), -1, 1)
    high = 3 * np.sqrt(3) * (np.arccos(a) - np.pi / 3) - 9 * s * (np.arcsin(b) - np.pi / 6)
    return np.where(xi <= 1 / 3, low, np.where(xi <= 0.5, mid, high))


def analytic_purity_density(prior: str, dim: int, xi):
    return PurityDensity(prior, dim)(xi)


def bin_averaged_density(density: PurityDensity, edges) -> np.ndarray:
    """Average of the closed form over each histogram bin (handles the edge singularity)."""
    from scipy.integrate import quad

    out = []
    for a, b in zip(edges[:-1], edges[1:]):
        val, _ = quad(lambda x: density(x), a, b, limit=200)
        out.append(val / (b - a))
    return np.array(out)


# ---------------------------------------------------------------- separability

class SeparableFraction(NamedTuple):
    fraction: float
    std_error: float
    edges: np.ndarray | None = None
    bin_fraction: np.ndarray | None = None
    bin_std_error: np.ndarray | None = None
    bin_counts: np.ndarray | None = None


def separable_fraction(states, purity_bins=None, weights=None) -> SeparableFraction:
    """PPT fraction of a stack of qubit-pair states, optionally per purity bin.

    ``purity_bins`` is an int (equal-width bins on [1/4, 1]) or explicit edges.
    """
    states = np.asarray(states)
    if states.ndim != 3 or states.shape[1:] != (4, 4):
        raise ValueError("separable_fraction needs a stack of 4 x 4 states")
    w = np.ones(len(states)) if weights is None else np.asarray(weights, dtype=float)
    sep = np.asarray(is_ppt_separable(states), dtype=float)
    total = w.sum()
    frac = float(np.dot(w, sep) / total)
    se = float(np.sqrt(np.sum(w**2 * (sep - frac) ** 2)) / total)
    if purity_bins is None:
        return SeparableFraction(frac, se)
    edges = np.linspace(0.25, 1.0, purity_bins + 1) if np.ndim(purity_bins) == 0 else np.asarray(purity_bins)
    xi = np.clip(purity(states), 0.25, 1.0)
    which = np.clip(np.searchsorted(edges, xi, side="right") - 1, 0, len(edges) - 2)
    fr, er, ct = [], [], []
    for b in range(len(edges) - 1):
        sel = which == b
        wb = w[sel]
        if wb.sum() == 0:
            fr.append(np.nan)
            er.append(np.nan)
            ct.append(0)
            continue
        f = np.dot(wb, sep[sel]) / wb.sum()
        fr.append(f)
        er.append(np.sqrt(np.sum(wb**2 * (sep[sel] - f) ** 2)) / wb.sum())
        ct.append(int(sel.sum()))
    return SeparableFraction(frac, se, edges, np.array(fr), np.array(er), np.array(ct))
