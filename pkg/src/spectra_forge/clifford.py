"""Complex Clifford modules, the hat map and grade decomposition.

Gamma matrices follow the anti-Hermitian convention

    gamma^j gamma^k + gamma^k gamma^j = -2 delta^{jk} Id,

so that the principal symbol ``i gamma^j xi_j`` of a Dirac-type operator is
Hermitian. The matrices come from a Jordan-Wigner tensor construction of
Hermitian generators ``e_j`` with ``gamma^j = -i e_j``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce
from itertools import combinations

import numpy as np

MAX_DIM = 8
DEFAULT_TOL = 1e-10

_I2 = np.eye(2, dtype=complex)
_S1 = np.array([[0, 1], [1, 0]], dtype=complex)
_S2 = np.array([[0, -1j], [1j, 0]], dtype=complex)
_S3 = np.array([[1, 0], [0, -1]], dtype=complex)


class UnsupportedDimensionError(ValueError):
    """Raised when a Clifford module is requested outside 1 <= d <= 8."""


class GradeDecompositionError(RuntimeError):
    """Raised when grade components fail to reconstruct the input."""


@dataclass(frozen=True)
class CliffordModule:
    """Irreducible complex Clifford module.

    Attributes:
        d: Spatial dimension.
        r: Module rank, ``2**(d // 2)``.
        gammas: Array of shape (d, r, r) holding gamma^1 ... gamma^d.
    """

    d: int
    r: int
    gammas: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.gammas.setflags(write=False)

    def gamma_of(self, X) -> np.ndarray:
        """Return gamma(X) = sum_k X_k gamma^k for a d-vector X."""
        X = np.asarray(X)
        return np.tensordot(X, self.gammas, axes=(-1, 0))

    def clifford_defect(self) -> float:
        """Max entry of gamma^j gamma^k + gamma^k gamma^j + 2 delta^{jk} Id."""
        g = self.gammas
        anti = np.einsum("jab,kbc->jkac", g, g)
        anti = anti + anti.transpose(1, 0, 2, 3)
        anti += 2.0 * np.einsum("jk,ab->jkab", np.eye(self.d), np.eye(self.r))
        return float(np.abs(anti).max())


def _kron_all(mats):
    return reduce(np.kron, mats, np.eye(1, dtype=complex))


def _hermitian_generators(d: int) -> list[np.ndarray]:
    n = d // 2
    gens = []
    for j in range(n):
        head = [_S3] * j
        tail = [_I2] * (n - j - 1)
        gens.append(_kron_all(head + [_S1] + tail))
        gens.append(_kron_all(head + [_S2] + tail))
    if d % 2 == 1:
        # chirality element; for d = 1 this is the 1x1 identity
        gens.append(_kron_all([_S3] * n))
    return gens


def build_gamma(d: int) -> CliffordModule:
    """Build the irreducible Clifford module of dimension d.

    Args:
        d: Spatial dimension, 1 <= d <= 8.

    Returns:
        CliffordModule with rank ``2**(d // 2)`` and anti-Hermitian gammas.

    Raises:
        UnsupportedDimensionError: If d is outside the supported range.
    """
    if not isinstance(d, (int, np.integer)) or not 1 <= d <= MAX_DIM:
        raise UnsupportedDimensionError(f"unsupported dimension d={d!r}; need 1 <= d <= {MAX_DIM}")
    gens = _hermitian_generators(int(d))
    gammas = np.stack([-1j * e for e in gens])
    # -1j * real/imag-unit entries is exact, so relations hold bit-for-bit
    return CliffordModule(d=int(d), r=gammas.shape[1], gammas=gammas)


def _check_shape(mod: CliffordModule, psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    if psi.shape[-2:] != (mod.r, mod.r):
        raise ValueError(f"matrix shape {psi.shape} does not match module rank {mod.r}")
    return psi


def hat(mod: CliffordModule, psi) -> np.ndarray:
    """Apply the hat map psi -> sum_k gamma^k psi gamma^k.

    Broadcasts over leading axes of ``psi``.
    """
    psi = _check_shape(mod, psi)
    g = mod.gammas
    return np.einsum("kab,...bc,kcd->...ad", g, psi, g)


def grade_eigenvalue(d: int, k: int) -> int:
    """Hat-map eigenvalue (-1)^k (2k - d) on grade-k endomorphisms."""
    return (-1) ** k * (2 * k - d)


def max_grade(d: int) -> int:
    return d if d % 2 == 0 else (d - 1) // 2


def grade_basis(mod: CliffordModule) -> dict[int, list[np.ndarray]]:
    """Ordered products gamma^{i1}...gamma^{ik}, i1 < ... < ik, grouped by k.

    For odd d only grades up to (d-1)/2 are returned; the higher grades are
    scalar multiples of these through the central volume element.
    """
    out = {}
    eye = np.eye(mod.r, dtype=complex)
    for k in range(max_grade(mod.d) + 1):
        out[k] = [reduce(np.matmul, [mod.gammas[i] for i in I], eye) for I in combinations(range(mod.d), k)]
    return out


@dataclass(frozen=True)
class GradeDecomposition:
    """Grade components of an endomorphism.

    Attributes:
        components: List of r x r matrices, index = grade.
        residual_norm: Frobenius norm of psi minus the sum of components.
    """

    components: list
    residual_norm: float

    def total(self) -> np.ndarray:
        return sum(self.components)


def grade_project(mod: CliffordModule, psi, tol: float = 1e-12) -> GradeDecomposition:
    """Split psi into hat-map eigencomponents by grade.

    The product basis is orthogonal for the pairing Tr(A^dagger B) with
    every element of squared norm r, so projections are plain traces.

    Raises:
        GradeDecompositionError: If the components do not reconstruct psi,
            or a component fails its hat eigenvalue check.
    """
    psi = _check_shape(mod, psi)
    scale = max(1.0, float(np.linalg.norm(psi)))
    comps = []
    for k, basis in grade_basis(mod).items():
        c = np.zeros_like(psi)
        for G in basis:
            c = c + np.trace(G.conj().T @ psi) / mod.r * G
        comps.append(c)
    residual = float(np.linalg.norm(psi - sum(comps)))
    if residual > tol * scale:
        raise GradeDecompositionError(f"grade reconstruction residual {residual:.3e}; module not irreducible?")
    for k, c in enumerate(comps):
        err = np.linalg.norm(hat(mod, c) - grade_eigenvalue(mod.d, k) * c)
        if err > 1e-10 * scale:
            raise GradeDecompositionError(f"grade {k} component violates hat eigenvalue by {err:.3e}")
    return GradeDecomposition(components=comps, residual_norm=residual)


def l_map(mod: CliffordModule, psi, X, sign: int) -> np.ndarray:
    """Return sign * (gamma(X) psi + psi gamma(X)) / 2.

    Both sign conventions occur: +1 in the Bochner-Weitzenbock connection
    and -1 in the commutant characterization of generalized potentials.
    """
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    psi = _check_shape(mod, psi)
    X = np.asarray(X, dtype=float)
    if X.shape != (mod.d,):
        raise ValueError(f"X must have shape ({mod.d},)")
    gX = mod.gamma_of(X)
    return sign * 0.5 * (gX @ psi + psi @ gX)


def commutant_report(mod: CliffordModule, psi) -> float:
    """Max over i, j of the norm of [L(e_i), gamma^j] with the sign -1 map."""
    psi = _check_shape(mod, psi)
    worst = 0.0
    eye = np.eye(mod.d)
    for i in range(mod.d):
        L = l_map(mod, psi, eye[i], -1)
        for g in mod.gammas:
            worst = max(worst, float(np.linalg.norm(L @ g - g @ L)))
    return worst


def is_generalized_potential(mod: CliffordModule, psi, tol: float = DEFAULT_TOL) -> bool:
    """True iff hat(psi) = (d - 2) psi within tol * max(1, |psi|)."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    psi = _check_shape(mod, psi)
    defect = np.linalg.norm(hat(mod, psi) - (mod.d - 2) * psi)
    return bool(defect <= tol * max(1.0, float(np.linalg.norm(psi))))
