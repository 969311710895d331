"""Density operators, POMs and the Born rule.

States and probability vectors are plain numpy arrays.  Most functions accept
either a single object (``(d, d)`` matrix, length-K vector) or a stack of
them (``(n, d, d)``, ``(n, K)``) and return the matching shape.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .simplex import sample_simplex_exponential

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-12
EIG_TOL = 1e-10

SIGMA_0 = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI = (SIGMA_0, SIGMA_X, SIGMA_Y, SIGMA_Z)

TETRAHEDRON_AXES = np.array(
    [[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=float
) / np.sqrt(3)


class NotInformationallyComplete(ValueError):
    """Raised when a POM cannot determine every state linearly."""


def bloch_operator(vec) -> np.ndarray:
    """Return ``vec . sigma`` for a real 3-vector."""
    x, y, z = vec
    return x * SIGMA_X + y * SIGMA_Y + z * SIGMA_Z


def qubit_state(x=0.0, y=0.0, z=0.0) -> np.ndarray:
    """Qubit density matrix with Bloch vector ``(x, y, z)``."""
    return 0.5 * (SIGMA_0 + bloch_operator((x, y, z)))


def hermitian_basis(d: int) -> np.ndarray:
    """Orthonormal basis (Hilbert-Schmidt) of d x d Hermitian matrices.

    Returns an array of shape ``(d*d, d, d)``; the first ``d`` elements are
    the diagonal projectors.
    """
    basis = []
    for j in range(d):
        m = np.zeros((d, d), dtype=complex)
        m[j, j] = 1.0
        basis.append(m)
    s = 1 / np.sqrt(2)
    for j in range(d):
        for k in range(j + 1, d):
            m = np.zeros((d, d), dtype=complex)
            m[j, k] = m[k, j] = s
            basis.append(m)
            m = np.zeros((d, d), dtype=complex)
            m[j, k] = -1j * s
            m[k, j] = 1j * s
            basis.append(m)
    return np.array(basis)


@dataclass(frozen=True, eq=False)
class Pom:
    """A probability-operator measurement: K nonnegative effects summing to 1.

    Parameters
    ----------
    effects : array of shape (K, d, d)
    name : registry name, also used to pick a fast physicality check
    """

    effects: np.ndarray
    name: str = "pom"
    check: bool = field(default=True, repr=False)

    def __post_init__(self):
        effects = np.asarray(self.effects, dtype=complex)
        if effects.ndim != 3 or effects.shape[1] != effects.shape[2]:
            raise ValueError(f"effects must have shape (K, d, d), got {effects.shape}")
        effects.setflags(write=False)
        object.__setattr__(self, "effects", effects)
        if self.check:
            if not np.allclose(effects, effects.conj().transpose(0, 2, 1), atol=1e-12):
                raise ValueError("POM effects must be Hermitian")
            if np.linalg.eigvalsh(effects).min() < -EIG_TOL:
                raise ValueError("POM effects must be positive semidefinite")
            total = effects.sum(axis=0)
            if np.abs(total - np.eye(self.dim)).max() > 1e-10:
                raise ValueError("POM effects must sum to the identity")

    @property
    def dim(self) -> int:
        return self.effects.shape[1]

    @property
    def n_outcomes(self) -> int:
        return self.effects.shape[0]

    def __len__(self):
        return self.n_outcomes

    @cached_property
    def _born_map(self) -> np.ndarray:
        # T[k, a] = tr{Pi_k B_a} in the orthonormal Hermitian basis B
        basis = hermitian_basis(self.dim)
        return np.einsum("kij,aji->ka", self.effects, basis).real

    @cached_property
    def is_informationally_complete(self) -> bool:
        return np.linalg.matrix_rank(self._born_map, tol=1e-9) == self.dim**2

    @cached_property
    def dual_frame(self) -> np.ndarray:
        """Operators W_k with ``M = sum_k p_k W_k`` inverting the Born map."""
        if not self.is_informationally_complete:
            raise NotInformationallyComplete(
                f"POM {self.name!r} has rank {np.linalg.matrix_rank(self._born_map)}"
                f" < {self.dim ** 2}"
            )
        pinv = np.linalg.pinv(self._born_map)  # (d*d, K)
        return np.einsum("ak,aij->kij", pinv, hermitian_basis(self.dim))


def born_probabilities(rho, pom: Pom) -> np.ndarray:
    """Born rule ``p_k = tr{Pi_k rho}`` for one state or a stack of states."""
    rho = np.asarray(rho)
    if rho.shape[-1] != pom.dim or rho.shape[-2] != pom.dim:
        raise ValueError(f"state dimension {rho.shape[-1]} does not match POM dimension {pom.dim}")
    p = np.einsum("kij,...ji->...k", pom.effects, rho).real
    return p


def make_trine() -> Pom:
    axes = [(1, 0, 0), (-0.5, np.sqrt(3) / 2, 0), (-0.5, -np.sqrt(3) / 2, 0)]
    return Pom(np.array([(SIGMA_0 + bloch_operator(a)) / 3 for a in axes]), name="trine")


def make_antitrine() -> Pom:
    axes = [(-1, 0, 0), (0.5, -np.sqrt(3) / 2, 0), (0.5, np.sqrt(3) / 2, 0)]
    return Pom(np.array([(SIGMA_0 + bloch_operator(a)) / 3 for a in axes]), name="antitrine")


def make_tetrahedron() -> Pom:
    return Pom(
        np.array([(SIGMA_0 + bloch_operator(a)) / 4 for a in TETRAHEDRON_AXES]),
        name="tetra",
    )


def product_pom(a: Pom, b: Pom, name: str | None = None) -> Pom:
    """Tensor-product POM; outcome ``(j, k)`` sits at index ``j * len(b) + k``."""
    effects = np.einsum("jab,kcd->jkacbd", a.effects, b.effects)
    effects = effects.reshape(len(a) * len(b), a.dim * b.dim, a.dim * b.dim)
    return Pom(effects, name=name or f"{a.name}*{b.name}")


def make_tat() -> Pom:
    return product_pom(make_trine(), make_antitrine())


def make_tetrahedron_pair() -> Pom:
    return product_pom(make_tetrahedron(), make_tetrahedron())


POM_REGISTRY = {
    "trine": make_trine,
    "antitrine": make_antitrine,
    "tetra": make_tetrahedron,
    "tetra2": make_tetrahedron_pair,
    "tat": make_tat,
}

_POM_CACHE: dict[str, Pom] = {}
# full names as stored in sample metadata
_POM_ALIASES = {"trine*antitrine": "tat", "tetra*tetra": "tetra2"}


def get_pom(name: str) -> Pom:
    """Look up (and cache) a registered POM by its CLI name or its full name."""
    name = _POM_ALIASES.get(name, name)
    try:
        factory = POM_REGISTRY[name]
    except KeyError:
        raise ValueError(f"unknown POM {name!r}; choose from {sorted(POM_REGISTRY)}") from None
    if name not in _POM_CACHE:
        _POM_CACHE[name] = factory()
    return _POM_CACHE[name]


def is_density_operator(rho, tol: float = EIG_TOL) -> bool:
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        return False
    if np.abs(rho - rho.conj().T).max() > HERMITIAN_TOL:
        return False
    if abs(np.trace(rho) - 1) > TRACE_TOL:
        return False
    return bool(np.linalg.eigvalsh(rho).min() >= -tol)


def purity(rho) -> np.ndarray | float:
    """tr{rho^2} for one state or a stack."""
    rho = np.asarray(rho)
    # tr{rho rho} = sum_ij rho_ij rho_ji = sum_ij |rho_ij|^2 for Hermitian rho
    value = np.einsum("...ij,...ij->...", rho, rho.conj()).real
    return float(value) if value.ndim == 0 else value


def partial_transpose(rho) -> np.ndarray:
    """Partial transpose of a two-qubit state on the second qubit."""
    rho = np.asarray(rho)
    if rho.shape[-2:] != (4, 4):
        raise ValueError("partial transpose is defined here for 4 x 4 (qubit pair) states only")
    lead = rho.shape[:-2]
    t = rho.reshape(lead + (2, 2, 2, 2))
    return np.swapaxes(t, -3, -1).reshape(lead + (4, 4))


def ppt_min_eigenvalue(rho) -> np.ndarray | float:
    value = np.linalg.eigvalsh(partial_transpose(rho))[..., 0]
    return float(value) if np.ndim(value) == 0 else value


def is_ppt_separable(rho, tol: float = EIG_TOL):
    """Peres-Horodecki test; exact separability criterion for qubit pairs."""
    result = np.asarray(ppt_min_eigenvalue(rho)) >= -tol
    return bool(result) if result.ndim == 0 else result


def haar_unitary(d: int, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Haar-random unitaries via QR of a complex Ginibre matrix."""
    shape = (d, d) if size is None else (size, d, d)
    z = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    diag = np.diagonal(r, axis1=-2, axis2=-1)
    phases = diag / np.abs(diag)
    return q * phases[..., None, :]


def sample_prior_one(d: int, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Uniform-simplex spectrum in a Haar-random eigenbasis."""
    if d < 2:
        raise ValueError("dimension must be at least 2")
    u = haar_unitary(d, rng, size)
    r = sample_simplex_exponential(d, rng, size)
    rho = (u * r[..., None, :]) @ np.swapaxes(u.conj(), -1, -2)
    return 0.5 * (rho + np.swapaxes(rho.conj(), -1, -2))


def sample_ginibre(d: int, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """rho = A A^dagger / tr{A A^dagger} with Gaussian A (Hilbert-Schmidt measure)."""
    if d < 2:
        raise ValueError("dimension must be at least 2")
    shape = (d, d) if size is None else (size, d, d)
    a = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    rho = a @ np.swapaxes(a.conj(), -1, -2)
    rho /= np.trace(rho, axis1=-2, axis2=-1).real[..., None, None]
    return 0.5 * (rho + np.swapaxes(rho.conj(), -1, -2))


def reconstruct_ic(p, pom: Pom) -> np.ndarray:
    """The Hermitian unit-trace operator whose Born probabilities are ``p``.

    Only defined for informationally complete POMs.  The result is positive
    semidefinite exactly when ``p`` is physical.
    """
    p = np.asarray(p, dtype=float)
    if p.shape[-1] != pom.n_outcomes:
        raise ValueError(f"expected {pom.n_outcomes} probabilities, got {p.shape[-1]}")
    return np.einsum("...k,kij->...ij", p, pom.dual_frame)


def born_residual(p, pom: Pom) -> np.ndarray:
    """Distance of ``p`` from the range of the Born map (zero when K = d^2)."""
    m = reconstruct_ic(p, pom)
    return np.abs(born_probabilities(m, pom) - p).max(axis=-1)
