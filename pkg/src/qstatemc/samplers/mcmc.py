"""Metropolis-Hastings random walks.

:func:`xmhmc_sample` walks on the unit sphere ``x`` with ``p = x**2``.
Several independent chains advance in lockstep so that physicality checks
can be batched; each chain draws from its own random stream, so a chain's
trajectory does not depend on how many chains run beside it (except through
the shared step size while it is being tuned).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..densities import TargetDensity
from ..physicality import AscentConfig, physicality_method
from ..quantum import Pom, born_probabilities
from ..rng import stream_rngs
from .independence import check_physical
from .weighted import WeightedSample

TUNE_WINDOW = 100
# past this width the renormalized proposal is close to uniform on the sphere
SIGMA_MAX = 4.0


def mhmc_generic(log_density, propose, start, n_steps: int, rng: np.random.Generator):
    """Random-walk Metropolis with a symmetric proposal.

    ``propose(theta, rng)`` must satisfy J(a|b) = J(b|a).  Returns the chain
    of ``n_steps`` states, starting with ``start``.
    """
    theta = np.asarray(start, dtype=float)
    logf = float(log_density(theta))
    if not np.isfinite(logf):
        raise ValueError("the starting point must have finite target density")
    chain = np.empty((n_steps,) + theta.shape)
    chain[0] = theta
    for j in range(1, n_steps):
        cand = np.asarray(propose(theta, rng), dtype=float)
        logf_cand = float(log_density(cand))
        if np.log(rng.random()) < logf_cand - logf:
            theta, logf = cand, logf_cand
        chain[j] = theta
    return chain


@dataclass(frozen=True)
class ChainConfig:
    """Settings for :func:`xmhmc_sample`.

    ``length`` counts steps per chain including ``burn_in`` (default 10% of
    ``length``).  Every ``thinning``-th post-burn-in state is emitted.
    """

    step_sigma: float = 0.1
    length: int = 10_000
    burn_in: int | None = None
    thinning: int = 1
    tune: bool = False
    tune_target: float = 0.23
    seed: int = 0
    n_chains: int = 1

    def __post_init__(self):
        if self.step_sigma <= 0:
            raise ValueError("step_sigma must be positive")
        if self.thinning < 1 or self.n_chains < 1:
            raise ValueError("thinning and n_chains must be at least 1")
        if self.burn_in is None:
            object.__setattr__(self, "burn_in", self.length // 10)
        if not 0 <= self.burn_in < self.length:
            raise ValueError("need 0 <= burn_in < length")

    @property
    def n_emitted(self) -> int:
        """Points emitted per chain."""
        return -(-(self.length - self.burn_in) // self.thinning)


def _log_walk_density(P, target: TargetDensity):
    # the 1/2 ln p terms are the Jacobian |x| of p = x^2
    with np.errstate(divide="ignore"):
        jac = 0.5 * np.log(P).sum(axis=-1)
    value = jac + np.asarray(target.log_density(P), dtype=float)
    return np.where(np.isnan(value), -np.inf, value)


def integrated_autocorr_ess(trace) -> float:
    """ESS of one scalar chain by Geyer's initial positive sequence."""
    x = np.asarray(trace, dtype=float)
    n = len(x)
    if n < 4 or np.var(x) == 0:
        return float(n)
    x = x - x.mean()
    f = np.fft.rfft(x, 2 * n)
    acf = np.fft.irfft(f * f.conj())[:n] / (np.arange(n, 0, -1) * x.var())
    tau = -1.0
    for k in range(0, n - 1, 2):
        pair = acf[k] + acf[k + 1]
        if pair <= 0:
            break
        tau += 2 * pair
    return float(n / max(tau, 1.0))


def xmhmc_sample(target: TargetDensity, pom: Pom, cfg: ChainConfig, rng: np.random.Generator | None = None,
                 ascent: AscentConfig | None = None, threads: int = 1, method: str = "auto",
                 stats: dict | None = None) -> WeightedSample:
    """Metropolis-Hastings on the hypersphere ``p = x**2``.

    Each chain starts at the maximally mixed state.  Proposals add isotropic
    Gaussian noise of width ``step_sigma`` to ``x`` and renormalize.
    Unphysical proposals have zero density and are rejected.  With
    ``cfg.tune`` the (shared) step size is multiplied by 1.1 or 0.9 after
    every window of about 100 proposals during burn-in (up to ``SIGMA_MAX``),
    then frozen.
    """
    K, C = pom.n_outcomes, cfg.n_chains
    gens = rng.spawn(C) if rng is not None else stream_rngs(cfg.seed, C)
    p0 = born_probabilities(np.eye(pom.dim) / pom.dim, pom)
    P = np.tile(p0, (C, 1))
    X = np.sqrt(P)
    logf = _log_walk_density(P, target)
    if not np.all(np.isfinite(logf)):
        raise ValueError("target density vanishes at the maximally mixed state")

    sigma = cfg.step_sigma
    window = max(1, -(-TUNE_WINDOW // C))
    win_acc = win_prop = 0
    n_emit = cfg.n_emitted
    out = np.empty((C, n_emit, K))
    acc_post = acc_burn = 0
    emitted = 0
    for step in range(cfg.length):
        dx = np.stack([g.standard_normal(K) for g in gens])
        log_u = np.log(np.array([g.random() for g in gens]))
        Xs = X + sigma * dx
        Xs /= np.linalg.norm(Xs, axis=1, keepdims=True)
        Ps = Xs**2
        logf_s = _log_walk_density(Ps, target)
        # w_qu only lowers the ratio, so test it just for proposals that pass the draw
        move = log_u < logf_s - logf
        idx = np.flatnonzero(move)
        if idx.size:
            move[idx] = check_physical(Ps[idx], pom, ascent, threads, method, stats)
        X[move], P[move], logf[move] = Xs[move], Ps[move], logf_s[move]
        n_move = int(move.sum())

        if step < cfg.burn_in:
            acc_burn += n_move
            if cfg.tune:
                win_acc += n_move
                win_prop += C
                if (step + 1) % window == 0:
                    rate = win_acc / win_prop
                    if rate > cfg.tune_target:
                        sigma = min(sigma * 1.1, SIGMA_MAX)
                    elif rate < cfg.tune_target:
                        sigma *= 0.9
                    win_acc = win_prop = 0
        else:
            acc_post += n_move
            if (step - cfg.burn_in) % cfg.thinning == 0:
                out[:, emitted] = P
                emitted += 1

    post_steps = (cfg.length - cfg.burn_in) * C
    points = out.reshape(C * n_emit, K)
    chain = np.repeat(np.arange(C), n_emit)
    ess = sum(integrated_autocorr_ess(out[c, :, 0]) for c in range(C))
    meta = {
        "method": "mcmc",
        "pom": pom.name,
        "target": target.kind,
        "physicality": physicality_method(pom) if method == "auto" else method,
        "proposals_total": post_steps,
        "accepted": acc_post,
        "acceptance_rate": acc_post / post_steps,
        "burn_in_acceptance_rate": acc_burn / (cfg.burn_in * C) if cfg.burn_in else None,
        "sigma_initial": cfg.step_sigma,
        "sigma": sigma,
        "n_chains": C,
        "length": cfg.length,
        "burn_in": cfg.burn_in,
        "thinning": cfg.thinning,
        "ess": ess,
    }
    return WeightedSample(points, np.ones(len(points)), chain, meta)


def tune_step_size(target: TargetDensity, pom: Pom, sigma_grid, probe_length: int,
                   rng: np.random.Generator, n_chains: int = 4, goal: float = 0.23,
                   ascent: AscentConfig | None = None):
    """Probe a grid of step sizes; return the one whose acceptance is nearest ``goal``.

    Also returns the list of ``(sigma, acceptance_rate)`` pairs.
    """
    table = []
    for sigma in sigma_grid:
        cfg = ChainConfig(step_sigma=float(sigma), length=probe_length, burn_in=0, n_chains=n_chains)
        s = xmhmc_sample(target, pom, cfg, rng.spawn(1)[0], ascent)
        table.append((float(sigma), s.meta["acceptance_rate"]))
    best = min(table, key=lambda row: abs(row[1] - goal))[0]
    return best, table
