"""Rejection and importance sampling from the uniform simplex reference."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from ..densities import TargetDensity, log_ratio_r
from ..physicality import AscentConfig, is_physical, maximize_likelihood, physicality_method
from ..quantum import Pom
from ..simplex import sample_simplex_exponential
from .weighted import WeightedSample

log = logging.getLogger(__name__)

CHUNK = 4096


class RejectionBudgetExceeded(RuntimeError):
    pass


def check_physical(P, pom: Pom, cfg: AscentConfig | None = None, threads: int = 1,
                   method: str = "auto", stats: dict | None = None) -> np.ndarray:
    """Batch physicality, optionally split over worker threads.

    Each verdict depends on its own point only, so the split does not change
    the result.
    """
    P = np.atleast_2d(P)
    if len(P) == 0:
        return np.zeros(0, dtype=bool)
    if threads <= 1 or len(P) < 2 * threads:
        return np.asarray(is_physical(P, pom, cfg, method=method, stats=stats))
    parts = np.array_split(P, threads)
    part_stats = [{} for _ in parts]
    with ThreadPoolExecutor(threads) as pool:
        out = pool.map(lambda a: np.asarray(is_physical(a[0], pom, cfg, method=method, stats=a[1])),
                       zip(parts, part_stats))
        out = list(out)
    if stats is not None:
        for ps in part_stats:
            for key, val in ps.items():
                stats[key] = stats.get(key, 0) + val
    return np.concatenate(out)


def default_log_bound(target: TargetDensity, pom: Pom, cfg: AscentConfig | None = None) -> float:
    """An upper bound on ln r(p) over the physical region.

    0 for the primitive prior, the maximal log-likelihood for the primitive
    posterior, and the cutoff convention when a Jeffreys factor is present.
    """
    K = pom.n_outcomes
    if target.kind == "prior-primitive":
        return 0.0
    if target.kind == "posterior-primitive":
        return maximize_likelihood(target.data, pom, cfg)[1]
    if target.kind == "prior-jeffreys":
        return target.default_log_cap(K)
    return target.default_log_cap(K) + maximize_likelihood(target.data, pom, cfg)[1]


def _capped_log_r(P, target: TargetDensity, log_cap: float | None):
    log_r = np.asarray(log_ratio_r(P, target), dtype=float)
    if log_cap is not None:
        log_r = np.minimum(log_r, log_cap)
    return log_r


def rejection_sample(target: TargetDensity, pom: Pom, n_accept_goal: int, rng: np.random.Generator,
                     log_R_bound: float | None = None, cfg: AscentConfig | None = None,
                     max_proposals: int = 10**8, chunk: int = CHUNK, threads: int = 1,
                     log_cap: float | None = None, method: str = "auto",
                     stats: dict | None = None) -> WeightedSample:
    """Accept uniform simplex draws with probability r(p) / R.

    Unphysical draws are always rejected.  For Jeffreys targets r(p) is
    capped at ``log_cap`` (default: the target's cutoff convention) which
    makes the result approximate.
    """
    K = pom.n_outcomes
    if log_R_bound is None:
        log_R_bound = default_log_bound(target, pom, cfg)
    if log_cap is None and target.prior_kind == "jeffreys":
        log_cap = log_R_bound
    accepted = []
    proposed = checked = physical = 0
    n_acc = 0
    while n_acc < n_accept_goal and proposed < max_proposals:
        m = min(chunk, max_proposals - proposed)
        P = sample_simplex_exponential(K, rng, m)
        log_u = np.log(rng.random(m))
        candidate = log_u < _capped_log_r(P, target, log_cap) - log_R_bound
        ok = np.zeros(m, dtype=bool)
        idx = np.flatnonzero(candidate)
        phys = check_physical(P[idx], pom, cfg, threads, method, stats)
        ok[idx[phys]] = True
        hits = np.flatnonzero(ok)
        need = n_accept_goal - n_acc
        if len(hits) >= need:
            # stop exactly at the goal so the proposal count is reproducible
            last = hits[need - 1]
            hits = hits[:need]
            m = last + 1
            idx = idx[idx <= last]
            phys = ok[idx]
        accepted.append(P[hits])
        n_acc += len(hits)
        proposed += m
        checked += len(idx)
        physical += int(phys.sum())
    if n_acc == 0:
        raise RejectionBudgetExceeded(
            f"no point accepted after {proposed} proposals "
            f"({checked} checked, {physical} physical, ln R = {log_R_bound:.4g})"
        )
    if n_acc < n_accept_goal:
        log.warning("proposal budget exhausted with %d of %d points", n_acc, n_accept_goal)
    points = np.concatenate(accepted)
    meta = {
        "method": "reject",
        "pom": pom.name,
        "target": target.kind,
        "physicality": physicality_method(pom) if method == "auto" else method,
        "proposals_total": proposed,
        "accepted": n_acc,
        "checked": checked,
        "physical": physical,
        "acceptance_rate": n_acc / proposed,
        "log_R_bound": float(log_R_bound),
        "log_cap": None if log_cap is None else float(log_cap),
    }
    return WeightedSample(points, np.ones(n_acc), np.zeros(n_acc, dtype=np.int64), meta)


def importance_sample(target: TargetDensity, pom: Pom, n_points: int, rng: np.random.Generator,
                      cfg: AscentConfig | None = None, chunk: int = CHUNK,
                      threads: int = 1, method: str = "auto",
                      stats: dict | None = None) -> WeightedSample:
    """Uniform simplex draws weighted by r(p); unphysical draws get weight 0."""
    K = pom.n_outcomes
    points, phys = [], []
    done = 0
    while done < n_points:
        m = min(chunk, n_points - done)
        P = sample_simplex_exponential(K, rng, m)
        points.append(P)
        phys.append(check_physical(P, pom, cfg, threads, method, stats))
        done += m
    P = np.concatenate(points) if points else np.zeros((0, K))
    ok = np.concatenate(phys) if phys else np.zeros(0, dtype=bool)
    log_r = np.full(len(P), -np.inf)
    log_r[ok] = log_ratio_r(P[ok], target)
    finite = np.isfinite(log_r)
    shift = float(log_r[finite].max()) if finite.any() else 0.0
    weights = np.where(finite, np.exp(log_r - shift), 0.0)
    sample = WeightedSample(P, weights, np.zeros(len(P), dtype=np.int64))
    n_phys = int(ok.sum())
    sample.meta = {
        "method": "importance",
        "pom": pom.name,
        "target": target.kind,
        "physicality": physicality_method(pom) if method == "auto" else method,
        "proposals_total": int(len(P)),
        "accepted": n_phys,
        "physical": n_phys,
        "acceptance_rate": n_phys / len(P) if len(P) else 0.0,
        "log_weight_shift": shift,
        "ess": sample.ess,
    }
    return sample
