"""Wodzicki residues of symbols on the flat torus.

Residues are sphere-times-torus quadratures of the trace of the degree -d
symbol component. For functions of a constant-coefficient Dirac operator
the homogeneous components are extracted numerically: the matrix function
is sampled along rays ``lambda * omega`` and fitted against powers of
lambda, node by node.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

from .operators import ClassicalSymbol, DiracOperatorSpec, TrigMatrixField, sub_symbol_generic

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class SphereQuadrature:
    """Quadrature on the unit sphere S^{d-1}.

    Attributes:
        d: Ambient dimension.
        nodes: Unit vectors, shape (n, d).
        weights: Positive weights summing to the sphere volume.
        order: Nominal polynomial exactness degree.
    """

    d: int
    nodes: np.ndarray
    weights: np.ndarray
    order: int

    def integrate(self, values: np.ndarray) -> np.ndarray:
        """Integrate values sampled at the nodes (node axis first)."""
        return np.tensordot(self.weights, values, axes=(0, 0))


def sphere_volume(d: int) -> float:
    """Surface area of S^{d-1}."""
    from scipy.special import gamma

    return float(2 * np.pi ** (d / 2) / gamma(d / 2))


def _circle(n: int) -> tuple[np.ndarray, np.ndarray]:
    phi = TWO_PI * np.arange(n) / n
    return np.stack([np.cos(phi), np.sin(phi)], axis=-1), np.full(n, TWO_PI / n)


def _s2(order: int) -> tuple[np.ndarray, np.ndarray]:
    n_theta = order // 2 + 1
    z, wz = roots_legendre(n_theta)
    nodes_c, wc = _circle(order + 1)
    s = np.sqrt(1 - z * z)
    pts = np.concatenate([s[:, None, None] * nodes_c[None, :, :], np.broadcast_to(z[:, None, None], (n_theta, order + 1, 1))], axis=-1)
    return pts.reshape(-1, 3), (wz[:, None] * wc[None, :]).reshape(-1)


def sphere_quadrature(d: int, order: int = 24) -> SphereQuadrature:
    """Product rule on S^{d-1} exact for polynomials of degree <= order.

    d=2 uses the trapezoid rule on the circle; d=3 uses Gauss-Legendre in
    the polar cosine times trapezoid in azimuth; d=4 adds a Gauss-Jacobi
    factor in the last coordinate over an S^2 rule.
    """
    if d == 2:
        nodes, w = _circle(order + 1)
    elif d == 3:
        nodes, w = _s2(order)
    elif d == 4:
        n4 = order // 2 + 1
        # measure (1 - u^2)^{1/2} du on the last coordinate
        u, wu = roots_jacobi(n4, 0.5, 0.5)
        p2, w2 = _s2(order)
        s = np.sqrt(1 - u * u)
        nodes = np.concatenate([(s[:, None, None] * p2[None]), np.broadcast_to(u[:, None, None], (n4, p2.shape[0], 1))], axis=-1).reshape(-1, 4)
        w = (wu[:, None] * w2[None, :]).reshape(-1)
    else:
        raise ValueError(f"sphere quadrature supports d in {{2, 3, 4}}, got {d}")
    return SphereQuadrature(d=d, nodes=nodes, weights=w, order=order)


@dataclass(frozen=True)
class TorusQuadrature:
    """Uniform grid on T^d, exact for trigonometric polynomials of degree < n."""

    d: int
    points: np.ndarray
    weights: np.ndarray


def torus_quadrature(d: int, n: int = 8) -> TorusQuadrature:
    grid = TWO_PI * np.arange(n) / n
    pts = np.stack(np.meshgrid(*([grid] * d), indexing="ij"), axis=-1).reshape(-1, d)
    return TorusQuadrature(d=d, points=pts, weights=np.full(pts.shape[0], (TWO_PI / n) ** d))


def cosphere_integral(func: Callable, quad: SphereQuadrature, torus: TorusQuadrature, batch: int = 4096) -> complex:
    """Integrate func(x, xi) (vectorized, returns (n,)) over T^d x S^{d-1}."""
    X = np.repeat(torus.points, quad.nodes.shape[0], axis=0)
    Xi = np.tile(quad.nodes, (torus.points.shape[0], 1))
    W = np.repeat(torus.weights, quad.nodes.shape[0]) * np.tile(quad.weights, torus.points.shape[0])
    total = 0.0 + 0.0j
    for s in range(0, X.shape[0], batch):
        total += np.dot(W[s:s + batch], func(X[s:s + batch], Xi[s:s + batch]))
    return complex(total)


def _real(z: complex, what: str, tol: float = 1e-9) -> float:
    if abs(z.imag) > tol * max(1.0, abs(z.real)):
        raise ValueError(f"{what} has imaginary part {z.imag:.3e}")
    return float(z.real)


def res_total(symbol_minus_d: Callable, quad: SphereQuadrature, torus: TorusQuadrature, homogeneity_tol: float = 1e-8, rng_seed: int = 0) -> float:
    """(2 pi)^{-d} integral over the cosphere bundle of Tr sigma_{-d}.

    Args:
        symbol_minus_d: Vectorized ``(x, xi) -> (n, r, r)``.
        quad: Sphere rule.
        torus: Torus grid.
        homogeneity_tol: Allowed relative violation of degree -d scaling.

    Raises:
        ValueError: If the symbol is not homogeneous of degree -d.
    """
    d = quad.d
    rng = np.random.default_rng(rng_seed)
    x = rng.uniform(0, TWO_PI, (6, d))
    xi = rng.standard_normal((6, d))
    base = symbol_minus_d(x, xi)
    scaled = symbol_minus_d(x, 2.5 * xi)
    scale = max(np.abs(base).max(), 1e-300)
    if np.abs(scaled - 2.5 ** (-d) * base).max() > homogeneity_tol * scale:
        raise ValueError("symbol is not homogeneous of degree -d")
    val = cosphere_integral(lambda X, Xi: np.trace(symbol_minus_d(X, Xi), axis1=-2, axis2=-1), quad, torus)
    return _real(val / TWO_PI**d, "residue")


def res_via_sub(A: ClassicalSymbol, quad: SphereQuadrature, torus: TorusQuadrature, h_x: float = 1e-3, h_xi: float = 1e-3) -> float:
    """(2 pi)^{-d} integral of Tr Sub(A) for A of order 1 - d."""
    if abs(A.order - (1 - A.d)) > 1e-12:
        raise ValueError(f"res_via_sub needs order 1-d = {1 - A.d}, got {A.order}")
    f = lambda X, Xi: np.trace(sub_symbol_generic(A, X, Xi, h_x, h_xi), axis1=-2, axis2=-1)
    return _real(cosphere_integral(f, quad, torus) / TWO_PI**A.d, "residue")


def res_pair(A: ClassicalSymbol, B: ClassicalSymbol, quad: SphereQuadrature, torus: TorusQuadrature, h_x: float = 1e-3, h_xi: float = 1e-3) -> float:
    """(2 pi)^{-d} integral of Tr(Sub(A) sigma_B + sigma_A Sub(B))."""
    if abs(A.order + B.order - (1 - A.d)) > 1e-12:
        raise ValueError("orders of A and B must sum to 1-d")

    def f(X, Xi):
        m = sub_symbol_generic(A, X, Xi, h_x, h_xi) @ B.components[0](X, Xi)
        m = m + A.components[0](X, Xi) @ sub_symbol_generic(B, X, Xi, h_x, h_xi)
        return np.trace(m, axis1=-2, axis2=-1)

    return _real(cosphere_integral(f, quad, torus) / TWO_PI**A.d, "residue")


@dataclass(frozen=True)
class HomogeneousExpansion:
    """Per-direction homogeneous parts f(l w) ~ sum_j l^{m-j} s_j(w).

    Attributes:
        m: Top degree.
        parts: Array (J+1, n_nodes, r, r) of s_j at the quadrature nodes.
        quad: The sphere rule providing the nodes.
        residual: Max relative fit residual over the ladder.
        ladder: Sample radii.
    """

    m: float
    parts: np.ndarray
    quad: SphereQuadrature
    residual: float
    ladder: np.ndarray

    def evaluate(self, lam: float) -> np.ndarray:
        pw = lam ** (self.m - np.arange(self.parts.shape[0]))
        return np.tensordot(pw, self.parts, axes=(0, 0))

    def component(self, degree: float) -> np.ndarray:
        j = int(round(self.m - degree))
        if not 0 <= j < self.parts.shape[0] or abs(self.m - j - degree) > 1e-12:
            raise ValueError(f"degree {degree} not in expansion")
        return self.parts[j]


def homogeneous_expand(f: Callable, m: float, J: int, quad: SphereQuadrature, ladder, validity_radius: float = 0.0, tol: float = 1e-6) -> HomogeneousExpansion:
    """Fit f(l w) against sum_{j<=J} l^{m-j} s_j(w) over the ladder.

    ``f`` maps xi of shape (n, d) to (n, r, r). The ladder is scaled
    geometrically so the Vandermonde system is well conditioned; the
    neglected terms l^{m-J-1} set the truncation error.

    Raises:
        ValueError: If the ladder dips inside the validity radius or the
            relative fit residual exceeds tol.
    """
    ladder = np.asarray(ladder, dtype=float)
    if ladder.min() <= validity_radius:
        raise ValueError(f"ladder minimum {ladder.min()} inside validity radius {validity_radius}")
    if ladder.size < J + 1:
        raise ValueError("ladder needs at least J+1 radii")
    n = quad.nodes.shape[0]
    samples = np.stack([f(lam * quad.nodes) for lam in ladder])  # (L, n, r, r)
    r = samples.shape[-1]
    # rescale rows by l^{-m} so every column is O(1)
    V = ladder[:, None] ** (-np.arange(J + 1))[None, :]
    rhs = (samples * ladder[:, None, None, None] ** (-m)).reshape(ladder.size, -1)
    coef, *_ = np.linalg.lstsq(V, rhs, rcond=None)
    fit = V @ coef
    scale = max(np.abs(rhs).max(), 1e-300)
    residual = float(np.abs(fit - rhs).max() / scale)
    if residual > tol:
        raise ValueError(f"homogeneous expansion residual {residual:.3e} exceeds {tol:.1e}")
    return HomogeneousExpansion(m=m, parts=coef.reshape(J + 1, n, r, r), quad=quad, residual=residual, ladder=ladder)


def matrix_function(H: np.ndarray, func: Callable) -> np.ndarray:
    """Apply a scalar function to a stack of Hermitian matrices."""
    w, v = np.linalg.eigh(H)
    return (v * func(w)[..., None, :]) @ np.conj(np.swapaxes(v, -1, -2))


def default_ladder(D: DiracOperatorSpec) -> np.ndarray:
    """Radii 4..16 times 64 |W|, so the neglected (|W|/l)^{J+1} terms sit near 1e-7."""
    W = D.zeroth_order().mean()
    return np.array([4.0, 6.0, 8.0, 12.0, 16.0]) * max(1.0, 64.0 * float(np.linalg.norm(W, 2)))


def ak_via_residue(D: DiracOperatorSpec, F, k: int, quad: SphereQuadrature | None = None, ladder=None, tol: float = 1e-6) -> float:
    """A_k(F, D) as the residue of F (D + |D|)/2 |D|^{k-d-1}, k in {0, 1}.

    Works mode by mode: the symbol of a function of a constant-coefficient
    operator is the same function of d(xi) = i gamma.xi + W, computed by
    Hermitian eigendecomposition at each sphere node and ladder radius.
    The degree -d part is extracted and integrated; the torus contributes
    its volume.
    """
    if k not in (0, 1):
        raise ValueError("ak_via_residue is implemented for k in {0, 1}")
    if not D.constant_flag:
        raise ValueError("ak_via_residue needs constant coefficients")
    d = D.d
    if F is None:
        F = np.eye(D.r)
    Fm = F.mean() if isinstance(F, TrigMatrixField) else np.asarray(F, dtype=complex)
    if isinstance(F, TrigMatrixField) and not F.is_constant():
        raise ValueError("F must be constant")
    quad = sphere_quadrature(d) if quad is None else quad
    ladder = default_ladder(D) if ladder is None else np.asarray(ladder, dtype=float)
    W = D.zeroth_order().mean()
    radius = float(np.linalg.norm(W, 2))
    power = k - d - 1

    def g(xi):
        H = D.symbol_matrix(xi)
        return Fm @ matrix_function(H, lambda w: 0.5 * (w + np.abs(w)) * np.abs(w) ** power)

    # top degree of g is 1 + power = k - d
    exp = homogeneous_expand(g, m=k - d, J=k + 2, quad=quad, ladder=ladder, validity_radius=radius, tol=tol)
    comp = exp.component(-d)
    tr = np.trace(comp, axis1=-2, axis2=-1)
    # (2 pi)^{-d} times the torus volume (2 pi)^d leaves the sphere integral
    val = quad.integrate(tr)
    return _real(complex(val), "A_k residue", tol=1e-8)
