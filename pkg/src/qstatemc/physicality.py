"""Is a probability vector the Born image of some state?

The general check maximizes a figure of merit ``Q(p; p_hat)`` over physical
``p_hat`` with ``rho_hat = A^dagger A / tr{A^dagger A}``, following the
gradient in ``A`` either directly (DG) or along conjugate directions (CG).
``p`` is physical when the maximum reaches 0, the largest value Q can take.

Everything here works on a batch of points at once; a batch is an ``(n, K)``
array and the ascent keeps one ``A`` matrix per point.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .densities import Dataset
from .quantum import (
    EIG_TOL,
    PAULI,
    Pom,
    born_probabilities,
    born_residual,
    make_tat,
    reconstruct_ic,
)

log = logging.getLogger(__name__)

Q_TOLERANCE = 1e-8
TAT_NAME = "trine*antitrine"


class ConvergenceError(RuntimeError):
    """The ascent hit ``max_iterations`` before its stopping rule held."""

    def __init__(self, message, best_q):
        super().__init__(message)
        self.best_q = best_q


class QFunctional:
    """Figure of merit Q(p; p_hat) <= 0 with equality iff p_hat == p.

    ``kind`` is ``"kl"`` for sum p ln(p_hat / p) or ``"bhattacharyya"`` for
    sum sqrt(p p_hat) - 1.
    """

    KINDS = ("kl", "bhattacharyya")

    def __init__(self, kind: str = "kl"):
        kind = kind.lower()
        if kind not in self.KINDS:
            raise ValueError(f"unknown Q functional {kind!r}")
        self.kind = kind

    def __repr__(self):
        return f"QFunctional({self.kind!r})"

    def value(self, p, p_hat):
        p = np.asarray(p, dtype=float)
        p_hat = np.asarray(p_hat, dtype=float)
        if self.kind == "kl":
            with np.errstate(divide="ignore", invalid="ignore"):
                terms = np.where(p > 0, p * np.log(p_hat / np.where(p > 0, p, 1.0)), 0.0)
            return terms.sum(axis=-1)
        return np.sqrt(p * np.clip(p_hat, 0, None)).sum(axis=-1) - 1.0

    def gradient(self, p, p_hat):
        """dQ / d p_hat_k."""
        p = np.asarray(p, dtype=float)
        p_hat = np.asarray(p_hat, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            if self.kind == "kl":
                g = p / p_hat
            else:
                g = 0.5 * np.sqrt(p / p_hat)
        return np.where(p > 0, g, 0.0)


@dataclass(frozen=True)
class AscentConfig:
    """Constants of the ascent.

    ``epsilon_step`` is the step size (halved whenever a step would lower Q),
    ``precision`` the trace-norm stopping threshold, ``chi`` the weight of the
    previous gradient in the Polak-Ribiere coefficient.
    """

    epsilon_step: float = 0.05
    precision: float = 1e-8
    chi: float = 0.0
    max_iterations: int = 20_000
    method: str = "CG"

    def __post_init__(self):
        if self.epsilon_step <= 0 or self.precision <= 0:
            raise ValueError("epsilon_step and precision must be positive")
        if not 0 <= self.chi < 1:
            raise ValueError("chi must lie in [0, 1)")
        if self.method.upper() not in ("DG", "CG"):
            raise ValueError(f"method must be DG or CG, not {self.method!r}")
        object.__setattr__(self, "method", self.method.upper())


class AscentResult(NamedTuple):
    q_max: np.ndarray
    rho_hat: np.ndarray
    p_hat: np.ndarray
    iterations: np.ndarray
    converged: np.ndarray
    verdict: np.ndarray | None
    history: list | None


def _dagger(m):
    return np.swapaxes(m.conj(), -1, -2)


def _expect(op, rho):
    return np.einsum("nij,nji->n", op, rho).real


def _inner(a, b):
    """Re tr{a^dagger b} per batch element."""
    return np.einsum("nij,nij->n", a.conj(), b).real


def trace_norm(m):
    """tr{sqrt(M^dagger M)} for a stack of square matrices."""
    ev = np.linalg.eigvalsh(_dagger(m) @ m)
    return np.sqrt(np.clip(ev, 0, None)).sum(-1)


def ascent_gradient(A, p, pom: Pom, q: QFunctional):
    """Gradient G = A (R - <R>) for a stack of A matrices, plus R and rho_hat."""
    rho = _dagger(A) @ A
    rho /= np.trace(rho, axis1=-2, axis2=-1).real[:, None, None]
    p_hat = born_probabilities(rho, pom)
    R = np.einsum("nk,kij->nij", q.gradient(p, p_hat), pom.effects)
    eye = np.eye(pom.dim)
    D = R - _expect(R, rho)[:, None, None] * eye
    return A @ D, R, rho, p_hat


def ascend(p, pom: Pom, q: QFunctional | str = "kl", cfg: AscentConfig | None = None,
           decide_tolerance: float | None = None, record: bool = False) -> AscentResult:
    """Maximize Q(p; p_hat) for every row of ``p`` simultaneously.

    With ``decide_tolerance`` set, a point also stops as soon as its verdict
    is certain: either Q >= -tol has been reached, or the concavity bound
    Q + lambda_max(R) - <R> on the maximum has dropped below -tol.
    """
    cfg = cfg or AscentConfig()
    q = QFunctional(q) if isinstance(q, str) else q
    p = np.atleast_2d(np.asarray(p, dtype=float))
    n, K = p.shape
    if K != pom.n_outcomes:
        raise ValueError(f"expected {pom.n_outcomes} probabilities, got {K}")
    d = pom.dim
    cg = cfg.method == "CG"

    A = np.tile(np.eye(d, dtype=complex) / np.sqrt(d), (n, 1, 1))
    G, R, rho, p_hat = ascent_gradient(A, p, pom, q)
    Q = q.value(p, p_hat)
    H = G.copy()
    eps = np.full(n, cfg.epsilon_step)
    iterations = np.zeros(n, dtype=np.int64)
    converged = np.zeros(n, dtype=bool)
    verdict = np.zeros(n, dtype=bool) if decide_tolerance is not None else None
    active = np.ones(n, dtype=bool)
    history = [[float(v)] for v in Q] if record else None
    eye = np.eye(d)

    for _ in range(cfg.max_iterations + 1):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        Ri, rhoi, Qi = R[idx], rho[idx], Q[idx]
        Rm = _expect(Ri, rhoi)
        stat = trace_norm((Ri - Rm[:, None, None] * eye) @ rhoi)
        done = stat <= cfg.precision
        converged[idx[done]] = True
        if verdict is not None:
            yes = Qi >= -decide_tolerance
            upper = Qi + np.linalg.eigvalsh(Ri)[:, -1] - Rm
            no = (upper < -decide_tolerance) & ~yes
            verdict[idx[done | yes]] = Qi[done | yes] >= -decide_tolerance
            verdict[idx[no]] = False
            done = done | yes | no
        # no step size improves Q any more: treat as the numerical maximum
        stuck = (eps[idx] < 1e-14) & ~done
        if verdict is not None:
            verdict[idx[stuck]] = Qi[stuck] >= -decide_tolerance
        done |= stuck | (iterations[idx] >= cfg.max_iterations)
        active[idx[done]] = False
        idx = idx[~done]
        if idx.size == 0:
            break
        iterations[idx] += 1

        A_new = A[idx] + eps[idx, None, None] * H[idx]
        scale = np.sqrt(np.einsum("nij,nij->n", A_new.conj(), A_new).real)
        A_new /= scale[:, None, None]
        G_new, R_new, rho_new, p_hat_new = ascent_gradient(A_new, p[idx], pom, q)
        Q_new = q.value(p[idx], p_hat_new)
        ok = Q_new >= Q[idx] - 1e-15 * (1 + np.abs(Q[idx]))
        ok &= np.isfinite(Q_new)

        bad = idx[~ok]
        eps[bad] *= 0.5
        H[bad] = G[bad]

        good = idx[ok]
        if good.size:
            G_old = G[good]
            Gn = G_new[ok]
            if cg:
                num = _inner(Gn, Gn - cfg.chi * G_old)
                den = _inner(G_old, G_old)
                with np.errstate(divide="ignore", invalid="ignore"):
                    gamma = np.where(den > 0, np.maximum(num / den, 0.0), 0.0)
                H[good] = Gn + gamma[:, None, None] * H[good] / scale[ok, None, None]
            else:
                H[good] = Gn
            A[good] = A_new[ok]
            G[good] = Gn
            R[good] = R_new[ok]
            rho[good] = rho_new[ok]
            p_hat[good] = p_hat_new[ok]
            Q[good] = Q_new[ok]
        if history is not None:
            for j in idx:
                history[j].append(float(Q[j]))

    return AscentResult(Q, rho, p_hat, iterations, converged, verdict, history)


def maximize_q(p, pom: Pom, q: QFunctional | str = "kl", cfg: AscentConfig | None = None):
    """Return ``(q_max, rho_hat)`` for a single probability vector."""
    p = np.asarray(p, dtype=float)
    if p.ndim != 1:
        raise ValueError("maximize_q takes one probability vector; use ascend() for batches")
    res = ascend(p, pom, q, cfg)
    if not res.converged[0]:
        raise ConvergenceError(
            f"ascent did not converge in {res.iterations[0]} iterations", float(res.q_max[0])
        )
    return float(res.q_max[0]), res.rho_hat[0]


def is_physical_ic(p, pom: Pom, tol: float = EIG_TOL):
    """Physicality via the linear inverse of an informationally complete POM."""
    p = np.asarray(p, dtype=float)
    m = reconstruct_ic(p, pom)
    ok = np.linalg.eigvalsh(m)[..., 0] >= -tol
    if pom.n_outcomes > pom.dim**2:
        ok &= born_residual(p, pom) <= 1e-10
    return bool(ok) if ok.ndim == 0 else ok


class _TatGeometry:
    """Linear data for the trine x antitrine POM.

    The probabilities fix the expectation values of sigma_a x sigma_b for
    a, b in {1, x, y}.  Every z-related component can be set to zero without
    losing positivity except <sigma_z x sigma_z>, so a state exists iff
    M0 + t Z >= 0 for some t in [-1, 1].
    """

    def __init__(self):
        self.pom = make_tat()
        ops = [np.kron(PAULI[a], PAULI[b]) / 4 for a in (0, 1, 2) for b in (0, 1, 2)]
        self.ops = np.array(ops)
        T = np.einsum("kij,mji->km", self.pom.effects, self.ops).real
        self.inverse = np.linalg.inv(T)
        self.z = np.kron(PAULI[3], PAULI[3]).real.diagonal() / 4

    def base(self, p):
        coeff = np.asarray(p, dtype=float) @ self.inverse.T
        return np.einsum("nm,mij->nij", coeff, self.ops)

    def min_eig(self, m0, t):
        m = m0.copy()
        m[:, range(4), range(4)] += t[:, None] * self.z
        return np.linalg.eigvalsh(m)[:, 0]


_TAT: _TatGeometry | None = None


def _tat() -> _TatGeometry:
    global _TAT
    if _TAT is None:
        _TAT = _TatGeometry()
    return _TAT


def tat_max_min_eigenvalue(p, bracket: float = 1e-6, grid_points: int = 2001):
    """max over t in [-1, 1] of the smallest eigenvalue of the completed state."""
    geo = _tat()
    p = np.atleast_2d(np.asarray(p, dtype=float))
    if p.shape[-1] != 9:
        raise ValueError("TAT probability vectors have 9 entries")
    m0 = geo.base(p)
    n = len(p)
    invphi = (np.sqrt(5) - 1) / 2
    a = np.full(n, -1.0)
    b = np.full(n, 1.0)
    c = b - invphi * (b - a)
    e = a + invphi * (b - a)
    fc = geo.min_eig(m0, c)
    fe = geo.min_eig(m0, e)
    while (b - a).max() > bracket:
        # maximum lies in [a, e] when f(c) >= f(e), otherwise in [c, b]
        left = fc >= fe
        b = np.where(left, e, b)
        a = np.where(left, a, c)
        c, e = (np.where(left, b - invphi * (b - a), e),
                np.where(left, c, a + invphi * (b - a)))
        f_new = geo.min_eig(m0, np.where(left, c, e))
        fc, fe = np.where(left, f_new, fe), np.where(left, fc, f_new)
    best = np.maximum(geo.min_eig(m0, 0.5 * (a + b)), np.maximum(fc, fe))
    for t in (-1.0, 1.0):
        best = np.maximum(best, geo.min_eig(m0, np.full(n, t)))

    # unimodality guard: a coarse scan must not beat the golden-section answer
    # (|d lambda_min / dt| <= 1/4, so a kink costs at most bracket / 4)
    coarse = np.max([geo.min_eig(m0, np.full(n, t)) for t in np.linspace(-1, 1, 9)], axis=0)
    suspect = np.flatnonzero(coarse > best + bracket)
    best = np.maximum(best, coarse)
    if suspect.size:
        log.warning("min-eigenvalue search not unimodal for %d points; scanning grid", suspect.size)
        grid = np.linspace(-1, 1, grid_points)
        sub = m0[suspect]
        scan = np.max([geo.min_eig(sub, np.full(len(sub), t)) for t in grid], axis=0)
        best[suspect] = np.maximum(best[suspect], scan)
    return best


def _tat_cut(geo, m0, t):
    """lambda_min at t and a supergradient (v' Z v for a lowest eigenvector v)."""
    m = m0.copy()
    m[:, range(4), range(4)] += t[:, None] * geo.z
    w, v = np.linalg.eigh(m)
    v0 = v[:, :, 0]
    return w[:, 0], np.einsum("ni,i,ni->n", v0.conj(), geo.z, v0).real


def tat_decide(p, tol: float = EIG_TOL, bracket: float = 1e-9):
    """Whether max_t lambda_min >= -tol, stopping as soon as the answer is certain.

    Bisects on the sign of the supergradient.  A value >= -tol proves
    physicality; the tangent lines at the bracket ends bound the concave
    function from above, and a bound below -tol proves the opposite.
    """
    geo = _tat()
    p = np.atleast_2d(np.asarray(p, dtype=float))
    if p.shape[-1] != 9:
        raise ValueError("TAT probability vectors have 9 entries")
    m0 = geo.base(p)
    n = len(p)
    lo, hi = np.full(n, -1.0), np.full(n, 1.0)
    f_lo, g_lo = _tat_cut(geo, m0, lo)
    f_hi, g_hi = _tat_cut(geo, m0, hi)
    verdict = (f_lo >= -tol) | (f_hi >= -tol)
    best = np.maximum(f_lo, f_hi)
    active = ~verdict
    while active.any():
        idx = np.flatnonzero(active)
        a, b = lo[idx], hi[idx]
        fa, ga, fb, gb = f_lo[idx], g_lo[idx], f_hi[idx], g_hi[idx]
        # upper bound from the two tangents (either end may already be the peak)
        denom = ga - gb
        s = np.clip(np.where(denom > 0, (fb - fa + ga * a - gb * b) / np.where(denom > 0, denom, 1), a), a, b)
        bound = np.where(ga <= 0, fa, np.where(gb >= 0, fb, fa + ga * (s - a)))
        done = (bound < -tol) | (b - a < bracket)
        active[idx[done]] = False
        idx, a, b = idx[~done], a[~done], b[~done]
        if idx.size == 0:
            break
        mid = 0.5 * (a + b)
        fm, gm = _tat_cut(geo, m0[idx], mid)
        best[idx] = np.maximum(best[idx], fm)
        hit = fm >= -tol
        verdict[idx[hit]] = True
        active[idx[hit]] = False
        up = gm > 0
        lo[idx[up]], f_lo[idx[up]], g_lo[idx[up]] = mid[up], fm[up], gm[up]
        hi[idx[~up]], f_hi[idx[~up]], g_hi[idx[~up]] = mid[~up], fm[~up], gm[~up]
    return verdict


def is_physical_tat(p, tol: float = EIG_TOL):
    """Physicality for the trine x antitrine POM by searching the free parameter."""
    p = np.asarray(p, dtype=float)
    if p.shape[-1] != 9:
        raise ValueError("TAT probability vectors have 9 entries")
    ok = tat_decide(p, tol)
    return bool(ok[0]) if p.ndim == 1 else ok


def physicality_method(pom: Pom) -> str:
    """Name of the fastest exact check available for ``pom``."""
    if pom.is_informationally_complete:
        return "ic"
    if pom.name == TAT_NAME:
        return "tat"
    return "ascent"


def is_physical(p, pom: Pom, cfg: AscentConfig | None = None, q: QFunctional | str = "kl",
                q_tolerance: float = Q_TOLERANCE, method: str = "auto", stats: dict | None = None):
    """Quantum-constraint indicator for one vector or an ``(n, K)`` batch.

    ``method`` is ``"auto"`` (fastest applicable), ``"ic"``, ``"tat"`` or
    ``"ascent"``.  If ``stats`` is given, the number of checked points and of
    ascent iterations are added to its ``"checked"`` and ``"iterations"`` keys.
    """
    p = np.asarray(p, dtype=float)
    if method == "auto":
        method = physicality_method(pom)
    if stats is not None:
        stats["checked"] = stats.get("checked", 0) + (1 if p.ndim == 1 else len(p))
        stats.setdefault("iterations", 0)
    if method == "ic":
        return is_physical_ic(p, pom)
    if method == "tat":
        if pom.name != TAT_NAME:
            raise ValueError(f"parameter search only applies to the TAT POM, not {pom.name!r}")
        return is_physical_tat(p)
    if method != "ascent":
        raise ValueError(f"unknown physicality method {method!r}")
    single = p.ndim == 1
    res = ascend(p, pom, q, cfg, decide_tolerance=q_tolerance)
    if stats is not None:
        stats["iterations"] += int(res.iterations.sum())
    undecided = ~res.converged & (res.iterations >= (cfg or AscentConfig()).max_iterations)
    if undecided.any():
        j = int(np.flatnonzero(undecided)[0])
        raise ConvergenceError(
            f"{undecided.sum()} point(s) undecided after max_iterations", float(res.q_max[j])
        )
    return bool(res.verdict[0]) if single else res.verdict


def maximize_likelihood(data: Dataset, pom: Pom, cfg: AscentConfig | None = None):
    """Maximum-likelihood Born probabilities and the attained log-likelihood."""
    if data.total <= 0:
        raise ValueError("maximum likelihood needs at least one count")
    if len(data) != pom.n_outcomes:
        raise ValueError("data length does not match the POM")
    f = data.frequencies
    res = ascend(f, pom, "kl", cfg)
    if not res.converged[0]:
        raise ConvergenceError("likelihood ascent did not converge", float(res.q_max[0]))
    p_ml = res.p_hat[0]
    n = data.counts
    log_l = float(np.sum(np.where(n > 0, n * np.log(np.where(n > 0, p_ml, 1.0)), 0.0)))
    return p_ml, log_l
