"""Orthonormal frames on the flat torus and the massless Dirac operator.

A frame is a product of plane rotations whose angles are real trigonometric
polynomials in a single coordinate, so frames are periodic by construction
and their derivatives are analytic. Axes are 0-based throughout: the plane
``(1, 2)`` rotates the second and third coordinate directions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .clifford import CliffordModule
from .operators import DiracOperatorSpec, TrigMatrixField

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class AngleFunction:
    """Real trigonometric polynomial theta(s) = sum_n c_n exp(i n s) in coordinate ``axis``."""

    axis: int
    freqs: np.ndarray
    coeffs: np.ndarray

    def __post_init__(self):
        lookup = dict(zip(self.freqs.tolist(), self.coeffs))
        for n, c in lookup.items():
            if abs(lookup.get(-n, 0.0) - np.conj(c)) > 1e-12 * max(1.0, abs(c)):
                raise ValueError("angle coefficients must satisfy c_{-n} = conj(c_n) (real angle)")

    def __call__(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        return np.real(np.exp(1j * np.multiply.outer(s, self.freqs)) @ self.coeffs)

    def derivative(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        return np.real(np.exp(1j * np.multiply.outer(s, self.freqs)) @ (1j * self.freqs * self.coeffs))


def trig_angle(axis: int, const: float = 0.0, cos: Mapping[int, float] | None = None, sin: Mapping[int, float] | None = None) -> AngleFunction:
    """theta = const + sum a_n cos(n s) + sum b_n sin(n s)."""
    terms: dict[int, complex] = {0: complex(const)}
    for n, a in (cos or {}).items():
        terms[n] = terms.get(n, 0) + a / 2
        terms[-n] = terms.get(-n, 0) + a / 2
    for n, b in (sin or {}).items():
        terms[n] = terms.get(n, 0) - 0.5j * b
        terms[-n] = terms.get(-n, 0) + 0.5j * b
    freqs = np.array(sorted(terms), dtype=int)
    return AngleFunction(axis=axis, freqs=freqs, coeffs=np.array([terms[n] for n in freqs]))


def angle_from_callable(axis: int, func: Callable, n_grid: int = 128, tol: float = 1e-10) -> AngleFunction:
    """Convert a periodic scalar function of one coordinate to an AngleFunction.

    Raises:
        ValueError: If func is not 2 pi periodic or not resolved by n_grid modes.
    """
    s = TWO_PI * np.arange(n_grid) / n_grid
    vals = np.asarray(func(s), dtype=float)
    probe = np.array([0.3, 1.7, 4.1])
    if np.abs(np.asarray(func(probe + TWO_PI)) - np.asarray(func(probe))).max() > tol:
        raise ValueError("angle function is not 2*pi periodic")
    c = np.fft.fft(vals) / n_grid
    n = np.fft.fftfreq(n_grid, 1.0 / n_grid).astype(int)
    keep = (np.abs(c) > 1e-15 * np.abs(c).max()) & (np.abs(n) < n_grid // 2)
    out = AngleFunction(axis=axis, freqs=n[keep], coeffs=c[keep])
    off = probe + 0.123
    if np.abs(out(off) - np.asarray(func(off))).max() > tol:
        raise ValueError("angle function not resolved by its trigonometric interpolant")
    return out


@dataclass(frozen=True)
class PlaneRotation:
    a: int
    b: int
    angle: AngleFunction


@dataclass(frozen=True)
class FrameField:
    """Frame O(x) = Q_1(x) Q_2(x) ... whose rows are the frame vectors X_k."""

    d: int
    rotations: tuple

    def evaluate(self, x) -> np.ndarray:
        """O(x), shape (n, d, d) for x of shape (n, d)."""
        return self._eval(np.atleast_2d(np.asarray(x, dtype=float)))[0]

    def derivative(self, x) -> np.ndarray:
        """dO, shape (n, d, d, d) with dO[:, l] = d_l O."""
        return self._eval(np.atleast_2d(np.asarray(x, dtype=float)))[1]

    def _eval(self, x):
        n = x.shape[0]
        O = np.broadcast_to(np.eye(self.d), (n, self.d, self.d)).copy()
        dO = np.zeros((n, self.d, self.d, self.d))
        for rot in self.rotations:
            s = x[:, rot.angle.axis]
            th, dth = rot.angle(s), rot.angle.derivative(s)
            Q = np.broadcast_to(np.eye(self.d), (n, self.d, self.d)).copy()
            dQ = np.zeros((n, self.d, self.d))
            c, sn = np.cos(th), np.sin(th)
            Q[:, rot.a, rot.a] = c
            Q[:, rot.a, rot.b] = sn
            Q[:, rot.b, rot.a] = -sn
            Q[:, rot.b, rot.b] = c
            dQ[:, rot.a, rot.a] = -sn * dth
            dQ[:, rot.a, rot.b] = c * dth
            dQ[:, rot.b, rot.a] = -c * dth
            dQ[:, rot.b, rot.b] = -sn * dth
            # product rule; Q depends on a single coordinate
            dO = dO @ Q[:, None]
            dO[:, rot.angle.axis] += O @ dQ
            O = O @ Q
        return O, dO

    def then(self, other: "FrameField") -> "FrameField":
        return FrameField(self.d, self.rotations + other.rotations)


def rotation_frame(d: int, plane: tuple[int, int], angle) -> FrameField:
    """Rotation by theta(x) in the (a, b) plane, identity elsewhere.

    ``angle`` is an AngleFunction, or a pair (axis, callable) converted with
    a periodicity check.
    """
    a, b = plane
    if d < 2 or a == b or not (0 <= a < d and 0 <= b < d):
        raise ValueError(f"invalid plane {plane} for d={d}")
    if not isinstance(angle, AngleFunction):
        axis, func = angle
        angle = angle_from_callable(axis, func)
    if not 0 <= angle.axis < d:
        raise ValueError("angle axis out of range")
    return FrameField(d=d, rotations=(PlaneRotation(a, b, angle),))


@dataclass(frozen=True)
class ChristoffelData:
    """G[i, j, k] = Gamma^k_{ij}, with nabla_{X_i} X_j = Gamma^k_{ij} X_k."""

    G: np.ndarray

    def antisymmetry_defect(self) -> float:
        """max |Gamma^k_{ij} + Gamma^j_{ik}|."""
        return float(np.abs(self.G + np.swapaxes(self.G, -1, -2)).max())


def christoffel(frame: FrameField, x) -> ChristoffelData:
    """Gamma^k_{ij} = <(X_i . d) X_j, X_k> with flat directional derivatives."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    O, dO = frame._eval(np.atleast_2d(x))
    G = np.einsum("nil,nljm,nkm->nijk", O, dO, O)
    return ChristoffelData(G[0] if single else G)


def sub_massless_theoretical(frame: FrameField, x) -> np.ndarray:
    """-(Gamma^3_{12} + Gamma^1_{23} + Gamma^2_{31}) / 2 (1-based labels), d = 3."""
    if frame.d != 3:
        raise ValueError("massless subprincipal formula is for d = 3 only")
    G = christoffel(frame, x).G
    return -0.5 * (G[..., 0, 1, 2] + G[..., 1, 2, 0] + G[..., 2, 0, 1])


def massless_dirac(frame: FrameField, mod: CliffordModule, n_grid: int = 64) -> DiracOperatorSpec:
    """Generalized Dirac operator of the frame with gamma(X) = g(X, X_k) R_k.

    gamma^l(x) = O_{kl}(x) R_k and the compatible spin connection
    b_l = (1/4) <d_l X_k, X_m> R_k R_m; the potential is zero. Coefficients
    are trigonometric series truncated at roundoff level.
    """
    if mod.d != frame.d:
        raise ValueError("frame and Clifford module dimensions differ")
    R = mod.gammas
    d = frame.d

    def gam(l):
        return lambda x: np.einsum("nk,kab->nab", frame.evaluate(x)[:, :, l], R)

    RR = np.einsum("kab,mbc->kmac", R, R)

    def conn(l):
        def f(x):
            O, dO = frame._eval(x)
            w = np.einsum("nkj,nmj->nkm", dO[:, l], O)
            return 0.25 * np.einsum("nkm,kmab->nab", w, RR)

        return f

    axes = sorted({rot.angle.axis for rot in frame.rotations})
    gammas = tuple(TrigMatrixField.from_function(gam(l), d, n_grid, axes=axes) for l in range(d))
    b = tuple(TrigMatrixField.from_function(conn(l), d, n_grid, axes=axes) for l in range(d))
    zero = TrigMatrixField.zeros(d, (mod.r, mod.r))
    return DiracOperatorSpec(mod=mod, b=b, psi=zero, gammas=gammas)
