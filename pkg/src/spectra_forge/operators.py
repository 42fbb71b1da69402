"""Dirac-type operators on the flat torus (side 2*pi per axis).

Coefficients are matrix-valued trigonometric polynomials stored as dense
Fourier boxes. An operator ``D = gamma^j(x)(d_j + b_j(x)) + psi(x)`` acts on
sections (fields with a single column) exactly in Fourier space, so every
identity checked here is limited by roundoff rather than discretization.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product
from math import comb
from typing import Callable, Mapping, Sequence

import numpy as np

from .clifford import CliffordModule

TWO_PI = 2.0 * np.pi


# ---------------------------------------------------------------------------
# matrix-valued trigonometric polynomials
# ---------------------------------------------------------------------------


def _extent(coeffs: np.ndarray) -> tuple[int, ...]:
    """Per-axis max |n_i| carrying an exactly nonzero coefficient."""
    d = coeffs.ndim - 2
    nz = np.abs(coeffs).reshape(coeffs.shape[:d] + (-1,)).max(axis=-1) > 0
    out = []
    for ax in range(d):
        M = (coeffs.shape[ax] - 1) // 2
        other = tuple(a for a in range(d) if a != ax)
        used = np.flatnonzero(nz.any(axis=other)) if other else np.flatnonzero(nz)
        out.append(int(np.abs(used - M).max()) if used.size else 0)
    return tuple(out)


class TrigMatrixField:
    """Matrix-valued trigonometric polynomial f(x) = sum_n c_n exp(i n.x).

    Coefficients live in a dense box of shape ``(2M_1+1, ..., 2M_d+1, p, q)``
    with frequency n_i stored at index ``n_i + M_i``. Instances are treated
    as immutable.
    """

    __array_priority__ = 100

    def __init__(self, coeffs):
        coeffs = np.array(coeffs, dtype=complex)
        if coeffs.ndim < 3:
            raise ValueError("coefficient box needs at least one spatial axis plus two matrix axes")
        if any(n % 2 == 0 for n in coeffs.shape[:-2]):
            raise ValueError("spatial box sides must be odd")
        coeffs.setflags(write=False)
        self.coeffs = coeffs

    # construction -----------------------------------------------------------
    @classmethod
    def zeros(cls, d: int, shape: tuple[int, int], M=0) -> "TrigMatrixField":
        M = (M,) * d if np.isscalar(M) else tuple(M)
        return cls(np.zeros(tuple(2 * m + 1 for m in M) + tuple(shape), dtype=complex))

    @classmethod
    def constant(cls, mat, d: int) -> "TrigMatrixField":
        mat = np.asarray(mat, dtype=complex)
        if mat.ndim == 1:
            mat = mat[:, None]
        return cls(mat.reshape((1,) * d + mat.shape))

    @classmethod
    def from_terms(cls, terms: Mapping[Sequence[int], np.ndarray], d: int, shape=None) -> "TrigMatrixField":
        """Build from ``{frequency tuple: matrix}``."""
        terms = {tuple(int(v) for v in n): np.asarray(c, dtype=complex) for n, c in terms.items()}
        if not terms:
            if shape is None:
                raise ValueError("empty term list needs an explicit shape")
            return cls.zeros(d, shape)
        mats = list(terms.values())
        shape = mats[0].shape if shape is None else tuple(shape)
        if mats[0].ndim == 1:
            shape = (shape[0], 1)
        M = [0] * d
        for n in terms:
            if len(n) != d:
                raise ValueError(f"frequency {n} has wrong dimension (d={d})")
            M = [max(m, abs(v)) for m, v in zip(M, n)]
        box = np.zeros(tuple(2 * m + 1 for m in M) + shape, dtype=complex)
        for n, c in terms.items():
            box[tuple(v + m for v, m in zip(n, M))] += c.reshape(shape)
        return cls(box)

    @classmethod
    def from_function(cls, func: Callable, d: int, n_grid: int = 64, tol: float = 1e-15, axes=None) -> "TrigMatrixField":
        """Sample a smooth periodic matrix function and keep its Fourier modes.

        Coefficients below ``tol`` times the largest one are dropped, so the
        result is a trigonometric polynomial accurate to about that level.
        If ``axes`` is given, func is assumed constant along the others.

        Raises:
            ValueError: If the sampled spectrum has not decayed by the grid edge.
        """
        axes = tuple(range(d)) if axes is None else tuple(sorted(axes))
        grid = np.arange(n_grid) * TWO_PI / n_grid
        k = len(axes)
        pts = np.zeros((n_grid,) * k + (d,))
        if k:
            mesh = np.stack(np.meshgrid(*([grid] * k), indexing="ij"), axis=-1)
            pts[..., list(axes)] = mesh
        vals = np.asarray(func(pts.reshape(-1, d)), dtype=complex)
        vals = vals.reshape((n_grid,) * k + vals.shape[1:])
        fa = tuple(range(k))
        c = np.fft.fftshift(np.fft.fftn(vals, axes=fa), axes=fa) / n_grid**k
        # drop the unpaired Nyquist slice so the box is symmetric
        c = c[(slice(1, None),) * k]
        scale = max(np.abs(c).max(), 1e-300)
        if k:
            edge = np.zeros(c.shape[:k], dtype=bool)
            for ax in fa:
                idx = [slice(None)] * k
                idx[ax] = [0, 1, -2, -1]
                sub = np.zeros_like(edge)
                sub[tuple(idx)] = True
                edge |= sub
            if np.abs(c[edge]).max() > 1e3 * tol * scale:
                raise ValueError("function not resolved on the sampling grid; raise n_grid")
        c = np.where(np.abs(c) > tol * scale, c, 0)
        # constant axes get a single zero-frequency slot
        box = np.expand_dims(c, tuple(a for a in range(d) if a not in axes))
        return cls(box).trim()

    # basic properties -------------------------------------------------------
    @property
    def d(self) -> int:
        return self.coeffs.ndim - 2

    @property
    def M(self) -> tuple[int, ...]:
        return tuple((n - 1) // 2 for n in self.coeffs.shape[:-2])

    @property
    def shape(self) -> tuple[int, int]:
        return self.coeffs.shape[-2:]

    @property
    def max_freq(self) -> int:
        return max(_extent(self.coeffs), default=0)

    def frequencies(self) -> np.ndarray:
        """Integer frequency vectors of the box, shape (*box, d)."""
        axes = [np.arange(-m, m + 1) for m in self.M]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def coefficient(self, n) -> np.ndarray:
        idx = tuple(int(v) + m for v, m in zip(n, self.M))
        if any(i < 0 or i >= 2 * m + 1 for i, m in zip(idx, self.M)):
            return np.zeros(self.shape, dtype=complex)
        return self.coeffs[idx]

    def mean(self) -> np.ndarray:
        """Zero-frequency coefficient, i.e. the torus average."""
        return self.coeffs[tuple(self.M)]

    def support(self, tol: float = 0.0) -> np.ndarray:
        """Frequencies whose coefficient norm exceeds tol, shape (n, d)."""
        mags = np.abs(self.coeffs).reshape(self.coeffs.shape[:-2] + (-1,)).max(axis=-1)
        return self.frequencies()[mags > tol]

    def dependent_axes(self, tol: float = 0.0) -> tuple[int, ...]:
        sup = self.support(tol)
        return tuple(ax for ax in range(self.d) if sup.size and np.any(sup[:, ax] != 0))

    def is_constant(self, tol: float = 0.0) -> bool:
        return not self.dependent_axes(tol)

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        diff = self.coeffs - self.adjoint().pad(self.M).coeffs
        return bool(np.abs(diff).max(initial=0.0) <= tol * max(1.0, np.abs(self.coeffs).max(initial=0.0)))

    # box manipulation -------------------------------------------------------
    def pad(self, M) -> "TrigMatrixField":
        M = (M,) * self.d if np.isscalar(M) else tuple(M)
        if any(a < b for a, b in zip(M, self.M)):
            raise ValueError("pad cannot shrink a box; use trim")
        if M == self.M:
            return self
        width = [(a - b, a - b) for a, b in zip(M, self.M)] + [(0, 0), (0, 0)]
        return TrigMatrixField(np.pad(self.coeffs, width))

    def trim(self, tol: float = 0.0) -> "TrigMatrixField":
        """Shrink the box to the frequencies carrying coefficients above tol."""
        c = np.where(np.abs(self.coeffs) > tol, self.coeffs, 0)
        ext = _extent(c)
        sl = tuple(slice(m - e, m + e + 1) for m, e in zip(self.M, ext))
        return TrigMatrixField(c[sl])

    def _aligned(self, other: "TrigMatrixField"):
        if self.d != other.d:
            raise ValueError("dimension mismatch")
        M = tuple(max(a, b) for a, b in zip(self.M, other.M))
        return self.pad(M), other.pad(M)

    # algebra ----------------------------------------------------------------
    def __add__(self, other):
        if isinstance(other, TrigMatrixField):
            a, b = self._aligned(other)
            return TrigMatrixField(a.coeffs + b.coeffs)
        return NotImplemented

    def __sub__(self, other):
        if isinstance(other, TrigMatrixField):
            a, b = self._aligned(other)
            return TrigMatrixField(a.coeffs - b.coeffs)
        return NotImplemented

    def __neg__(self):
        return TrigMatrixField(-self.coeffs)

    def __mul__(self, scalar):
        if np.isscalar(scalar):
            return TrigMatrixField(self.coeffs * scalar)
        return NotImplemented

    __rmul__ = __mul__

    def __matmul__(self, other):
        if isinstance(other, TrigMatrixField):
            return TrigMatrixField(_convolve(self.coeffs, other.coeffs))
        other = np.asarray(other)
        if other.ndim == 2:
            return TrigMatrixField(self.coeffs @ other)
        return NotImplemented

    def __rmatmul__(self, other):
        other = np.asarray(other)
        if other.ndim == 2:
            return TrigMatrixField(other @ self.coeffs)
        return NotImplemented

    def derivative(self, j: int) -> "TrigMatrixField":
        """Partial derivative along axis j (multiplies c_n by i n_j)."""
        shape = [1] * (self.d + 2)
        shape[j] = -1
        n = np.arange(-self.M[j], self.M[j] + 1).reshape(shape)
        return TrigMatrixField(1j * n * self.coeffs)

    def adjoint(self) -> "TrigMatrixField":
        """Pointwise conjugate transpose: c_n -> c_{-n}^dagger."""
        flipped = self.coeffs[(slice(None, None, -1),) * self.d]
        return TrigMatrixField(np.conj(np.swapaxes(flipped, -1, -2)))

    def evaluate(self, x) -> np.ndarray:
        """Evaluate at points x of shape (..., d); returns (..., p, q)."""
        x = np.asarray(x, dtype=float)
        lead = x.shape[:-1]
        x = x.reshape(-1, self.d)
        n = self.frequencies().reshape(-1, self.d)
        phase = np.exp(1j * (x @ n.T))
        vals = phase @ self.coeffs.reshape(n.shape[0], -1)
        return vals.reshape(lead + self.shape)

    def l2_norm(self) -> float:
        """L2 norm on the torus with flat measure."""
        return float(np.sqrt(TWO_PI**self.d * np.sum(np.abs(self.coeffs) ** 2)))

    def __repr__(self):
        return f"TrigMatrixField(d={self.d}, shape={self.shape}, M={self.M})"


def _convolve(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Coefficient box of the pointwise matrix product, via zero-padded FFT."""
    d = A.ndim - 2
    ea, eb = _extent(A), _extent(B)
    Ma = tuple((n - 1) // 2 for n in A.shape[:d])
    Mb = tuple((n - 1) // 2 for n in B.shape[:d])
    A = A[tuple(slice(m - e, m + e + 1) for m, e in zip(Ma, ea))]
    B = B[tuple(slice(m - e, m + e + 1) for m, e in zip(Mb, eb))]
    if all(e == 0 for e in ea) or all(e == 0 for e in eb):
        # one factor is constant: plain broadcasting is exact
        return A @ B
    L = tuple(2 * (a + b) + 1 for a, b in zip(ea, eb))
    axes = tuple(range(d))
    Fa = np.fft.fftn(A, s=L, axes=axes)
    Fb = np.fft.fftn(B, s=L, axes=axes)
    return np.fft.ifftn(Fa @ Fb, axes=axes)


def as_field(obj, d: int, shape: tuple[int, int]) -> TrigMatrixField:
    """Coerce None, a constant matrix, a term dict or a field to a field."""
    if obj is None:
        return TrigMatrixField.zeros(d, shape)
    if isinstance(obj, TrigMatrixField):
        if obj.d != d or obj.shape != tuple(shape):
            raise ValueError(f"field {obj} incompatible with d={d}, shape={shape}")
        return obj
    if isinstance(obj, Mapping):
        return TrigMatrixField.from_terms(obj, d, shape)
    mat = np.asarray(obj, dtype=complex)
    if mat.ndim == 0:
        mat = mat * np.eye(shape[0])
    return TrigMatrixField.constant(mat, d)


def inner(u: TrigMatrixField, v: TrigMatrixField) -> complex:
    """L2 inner product <u, v> = integral of v^dagger u over the torus."""
    a, b = u._aligned(v)
    return complex(TWO_PI**u.d * np.vdot(b.coeffs, a.coeffs))


def random_section(d: int, r: int, max_freq: int, rng: np.random.Generator) -> TrigMatrixField:
    """Section with standard complex Gaussian coefficients for |n|_inf <= max_freq."""
    shape = (2 * max_freq + 1,) * d + (r, 1)
    c = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return TrigMatrixField(c)


def random_hermitian_field(d: int, r: int, max_freq: int, rng: np.random.Generator, scale: float = 1.0) -> TrigMatrixField:
    """Hermitian-valued field with Gaussian coefficients."""
    shape = (2 * max_freq + 1,) * d + (r, r)
    c = TrigMatrixField(scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)))
    return 0.5 * (c + c.adjoint())


# ---------------------------------------------------------------------------
# Dirac operator specification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DiracOperatorSpec:
    """D = gamma^j(x) (d_j + b_j(x)) + psi(x) on the torus.

    Attributes:
        mod: Clifford module fixing d and r.
        b: Connection coefficients b_1..b_d (r x r fields).
        psi: Potential relative to the connection d + b.
        gammas: Optional x-dependent Clifford fields; defaults to the
            constant ``mod.gammas``. Frame-twisted operators need these.
    """

    mod: CliffordModule
    b: tuple
    psi: TrigMatrixField
    gammas: tuple = field(default=None)

    def __post_init__(self):
        d, r = self.mod.d, self.mod.r
        if len(self.b) != d:
            raise ValueError(f"need {d} connection coefficients, got {len(self.b)}")
        object.__setattr__(self, "b", tuple(as_field(bj, d, (r, r)) for bj in self.b))
        object.__setattr__(self, "psi", as_field(self.psi, d, (r, r)))
        if self.gammas is None:
            g = tuple(TrigMatrixField.constant(G, d) for G in self.mod.gammas)
        else:
            if len(self.gammas) != d:
                raise ValueError("need one gamma field per axis")
            g = tuple(as_field(G, d, (r, r)) for G in self.gammas)
        object.__setattr__(self, "gammas", g)

    @property
    def d(self) -> int:
        return self.mod.d

    @property
    def r(self) -> int:
        return self.mod.r

    @property
    def constant_flag(self) -> bool:
        fields = self.gammas + self.b + (self.psi,)
        return all(f.is_constant() for f in fields)

    def zeroth_order(self) -> TrigMatrixField:
        """W = gamma^j b_j + psi, the full zeroth-order coefficient."""
        W = self.psi
        for G, bj in zip(self.gammas, self.b):
            W = W + G @ bj
        return W

    def dependent_axes(self, rtol: float = 1e-13) -> tuple[int, ...]:
        """Axes along which some coefficient varies (FFT roundoff ignored)."""
        fields = self.gammas + self.b + (self.psi, self.zeroth_order())
        axes = set()
        for f in fields:
            tol = rtol * max(1.0, float(np.abs(f.coeffs).max(initial=0.0)))
            axes.update(f.dependent_axes(tol))
        return tuple(sorted(axes))

    def max_freq(self) -> int:
        return max(f.max_freq for f in self.gammas + self.b + (self.psi,))

    def symbol_matrix(self, k) -> np.ndarray:
        """d(k) = i gamma^j k_j + W for constant specs; k of shape (..., d)."""
        if not self.constant_flag:
            raise ValueError("symbol_matrix needs constant coefficients")
        k = np.asarray(k, dtype=float)
        G = np.stack([g.mean() for g in self.gammas])
        W = self.zeroth_order().mean()
        return 1j * np.tensordot(k, G, axes=(-1, 0)) + W


def dirac_spec(mod: CliffordModule, b=None, psi=None, gammas=None) -> DiracOperatorSpec:
    """Convenience constructor accepting matrices, term dicts or fields."""
    d, r = mod.d, mod.r
    b = [None] * d if b is None else list(b)
    return DiracOperatorSpec(mod=mod, b=tuple(as_field(x, d, (r, r)) for x in b), psi=as_field(psi, d, (r, r)), gammas=gammas)


def random_selfadjoint_dirac(mod: CliffordModule, max_freq: int, rng: np.random.Generator, scale: float = 0.5) -> DiracOperatorSpec:
    """Random formally self-adjoint operator with an abelian gauge field.

    b_j = i a_j(x) Id with real trigonometric a_j, and psi Hermitian-valued.
    Scalar b_j commute with gamma, so d + b is a compatible connection.
    """
    d, r = mod.d, mod.r
    b = []
    for _ in range(d):
        a = random_hermitian_field(d, 1, max_freq, rng, scale)
        b.append(TrigMatrixField(1j * a.coeffs * np.eye(r)))
    psi = random_hermitian_field(d, r, max_freq, rng, scale)
    return dirac_spec(mod, b=b, psi=psi)


def compatibility_defect(D: DiracOperatorSpec) -> float:
    """Max coefficient of d_j gamma^k + [b_j, gamma^k]; zero for a Dirac bundle."""
    worst = 0.0
    for j in range(D.d):
        for G in D.gammas:
            f = G.derivative(j) + D.b[j] @ G - G @ D.b[j]
            worst = max(worst, float(np.abs(f.coeffs).max(initial=0.0)))
    return worst


def apply(D: DiracOperatorSpec, s: TrigMatrixField) -> TrigMatrixField:
    """Apply D to a section exactly in Fourier space."""
    if s.shape != (D.r, 1) or s.d != D.d:
        raise ValueError(f"section shape {s.shape} does not match rank {D.r}")
    out = D.psi @ s
    for j, (G, bj) in enumerate(zip(D.gammas, D.b)):
        out = out + G @ (s.derivative(j) + bj @ s)
    return out


def adjoint_residual(D: DiracOperatorSpec, trials: int = 8, seed: int = 0, max_freq: int = 3) -> float:
    """Max of |<Du, v> - <u, Dv>| / (|u| |v|) over random sections."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        u = random_section(D.d, D.r, max_freq, rng)
        v = random_section(D.d, D.r, max_freq, rng)
        gap = abs(inner(apply(D, u), v) - inner(u, apply(D, v)))
        worst = max(worst, gap / (u.l2_norm() * v.l2_norm()))
    return worst


# ---------------------------------------------------------------------------
# Bochner-Weitzenbock decomposition
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BWData:
    """D^2 = Laplacian of the modified connection plus V.

    Attributes:
        connection: Coefficients c_j = b_j - L_j of the modified connection.
        V: Zeroth-order remainder.
        L: The maps L_j = (gamma^j psi + psi gamma^j) / 2.
    """

    connection: tuple
    V: TrigMatrixField
    L: tuple


def curvature(D: DiracOperatorSpec, i: int, j: int) -> TrigMatrixField:
    bi, bj = D.b[i], D.b[j]
    return bi @ bj - bj @ bi + bj.derivative(i) - bi.derivative(j)


def bw_decompose(D: DiracOperatorSpec) -> BWData:
    """Assemble the modified connection and the potential V term by term."""
    G, b, psi = D.gammas, D.b, D.psi
    L = tuple(0.5 * (Gi @ psi + psi @ Gi) for Gi in G)
    V = psi @ psi
    for i in range(D.d):
        V = V + L[i] @ L[i]
        cov = psi.derivative(i) + b[i] @ psi - psi @ b[i]
        V = V + 0.5 * (G[i] @ cov - cov @ G[i])
        for j in range(D.d):
            if i != j:
                V = V + 0.5 * (G[i] @ G[j] @ curvature(D, i, j))
    conn = tuple(bj - Lj for bj, Lj in zip(b, L))
    return BWData(connection=conn, V=V, L=L)


def connection_laplacian(conn: Sequence[TrigMatrixField], s: TrigMatrixField) -> TrigMatrixField:
    """Apply -sum_j (d_j + c_j)^2 to a section."""
    out = None
    for j, c in enumerate(conn):
        t = s.derivative(j) + c @ s
        t = t.derivative(j) + c @ t
        out = -t if out is None else out - t
    return out


def bw_residual(D: DiracOperatorSpec, trials: int = 4, seed: int = 0, max_freq: int = 2, data: BWData | None = None) -> float:
    """Max over random sections of |D^2 s - (Delta s + V s)| / |s|."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    data = bw_decompose(D) if data is None else data
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        s = random_section(D.d, D.r, max_freq, rng)
        lhs = apply(D, apply(D, s))
        rhs = connection_laplacian(data.connection, s) + data.V @ s
        worst = max(worst, (lhs - rhs).l2_norm() / s.l2_norm())
    return worst


# ---------------------------------------------------------------------------
# pointwise closed forms
# ---------------------------------------------------------------------------


def _points(x, d: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    return x.reshape(-1, d), single


def _gamma_values(D: DiracOperatorSpec, x: np.ndarray) -> np.ndarray:
    """Gamma fields at points, shape (n, d, r, r)."""
    return np.stack([G.evaluate(x) for G in D.gammas], axis=1)


def h1_density(D: DiracOperatorSpec, x) -> np.ndarray:
    """(4 pi)^{-d/2} (psi_hat - (d - 2) psi) / 2 at x."""
    pts, single = _points(x, D.d)
    psi = D.psi.evaluate(pts)
    # the coordinate frame is orthonormal, so hat uses the local gammas
    g = _gamma_values(D, pts)
    ph = np.einsum("nkab,nbc,nkcd->nad", g, psi, g)
    out = (4 * np.pi) ** (-D.d / 2) * 0.5 * (ph - (D.d - 2) * psi)
    return out[0] if single else out


def sub_symbol_dirac(D: DiracOperatorSpec, x) -> np.ndarray:
    """(gamma^j b_j + b_j gamma^j) / 2 + psi at x (xi-independent)."""
    pts, single = _points(x, D.d)
    out = D.psi.evaluate(pts)
    for G, bj in zip(D.gammas, D.b):
        g, bv = G.evaluate(pts), bj.evaluate(pts)
        out = out + 0.5 * (g @ bv + bv @ g)
    return out[0] if single else out


def sub_symbol_laplacian(D: DiracOperatorSpec, x, xi) -> np.ndarray:
    """i (gamma^k psi + psi gamma^k - 2 b_k) xi_k at (x, xi)."""
    pts, single = _points(x, D.d)
    xi = np.asarray(xi, dtype=float).reshape(-1, D.d)
    psi = D.psi.evaluate(pts)
    out = np.zeros_like(psi)
    for k, (G, bk) in enumerate(zip(D.gammas, D.b)):
        g = G.evaluate(pts)
        out = out + 1j * (g @ psi + psi @ g - 2 * bk.evaluate(pts)) * xi[:, k, None, None]
    return out[0] if single else out


# ---------------------------------------------------------------------------
# classical symbols and differential operators
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ClassicalSymbol:
    """Graded symbol sigma^(0), sigma^(1), ... of order m.

    Each component is a vectorized callable ``(x, xi) -> (n, r, r)`` with
    x and xi of shape (n, d); component j is homogeneous of degree m - j.
    """

    order: float
    components: tuple
    d: int
    r: int

    @property
    def depth(self) -> int:
        return len(self.components)

    def __call__(self, j: int, x, xi) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        xi = np.asarray(xi, dtype=float)
        single = x.ndim == 1
        out = self.components[j](x.reshape(-1, self.d), xi.reshape(-1, self.d))
        return out[0] if single else out

    def homogeneity_defect(self, rng: np.random.Generator, n: int = 8, lambdas=(2.0, 3.0)) -> float:
        """Max relative violation of sigma_j(x, l xi) = l^{m-j} sigma_j(x, xi)."""
        x = rng.uniform(0, TWO_PI, (n, self.d))
        xi = rng.standard_normal((n, self.d))
        worst = 0.0
        for j in range(self.depth):
            base = self(j, x, xi)
            scale = max(np.abs(base).max(), 1e-300)
            for lam in lambdas:
                err = np.abs(self(j, x, lam * xi) - lam ** (self.order - j) * base).max()
                worst = max(worst, err / (lam ** (self.order - j) * scale))
        return float(worst)


def constant_symbol(mats: Sequence[Callable], order: float, d: int, r: int) -> ClassicalSymbol:
    """Symbol from x-independent callables ``xi -> (n, r, r)``."""
    comps = tuple((lambda f: (lambda x, xi: f(xi)))(f) for f in mats)
    return ClassicalSymbol(order=order, components=comps, d=d, r=r)


def endomorphism_symbol(F: TrigMatrixField) -> ClassicalSymbol:
    """Order-zero symbol of multiplication by F (depth 2, second part zero)."""
    r = F.shape[0]
    c0 = lambda x, xi: F.evaluate(x)
    c1 = lambda x, xi: np.zeros((x.shape[0], r, r), dtype=complex)
    return ClassicalSymbol(order=0, components=(c0, c1), d=F.d, r=r)


@dataclass(frozen=True)
class DiffOp:
    """Differential operator sum_alpha c_alpha(x) d^alpha with field coefficients."""

    d: int
    r: int
    terms: dict

    @property
    def order(self) -> int:
        return max(sum(a) for a in self.terms)

    @classmethod
    def from_dirac(cls, D: DiracOperatorSpec) -> "DiffOp":
        eye = np.eye(D.d, dtype=int)
        terms = {tuple(eye[j]): D.gammas[j] for j in range(D.d)}
        terms[(0,) * D.d] = D.zeroth_order()
        return cls(d=D.d, r=D.r, terms=terms)

    @classmethod
    def multiplication(cls, F: TrigMatrixField) -> "DiffOp":
        return cls(d=F.d, r=F.shape[0], terms={(0,) * F.d: F})

    def compose(self, other: "DiffOp") -> "DiffOp":
        """Leibniz-rule composition self o other."""
        out: dict = {}
        for alpha, c in self.terms.items():
            for beta, e in other.terms.items():
                for gam in product(*(range(a + 1) for a in alpha)):
                    coef = 1
                    de = e
                    for ax, (a, g) in enumerate(zip(alpha, gam)):
                        coef *= comb(a, g)
                        for _ in range(g):
                            de = de.derivative(ax)
                    key = tuple(a - g + b for a, g, b in zip(alpha, gam, beta))
                    term = coef * (c @ de)
                    out[key] = term if key not in out else out[key] + term
        return DiffOp(d=self.d, r=self.r, terms=out)

    def apply(self, s: TrigMatrixField) -> TrigMatrixField:
        out = None
        for alpha, c in self.terms.items():
            t = s
            for ax, a in enumerate(alpha):
                for _ in range(a):
                    t = t.derivative(ax)
            t = c @ t
            out = t if out is None else out + t
        return out

    def symbol(self) -> ClassicalSymbol:
        """Exact graded full symbol sum_alpha c_alpha(x) (i xi)^alpha."""
        m = self.order

        def make(deg):
            items = [(np.array(a), c) for a, c in self.terms.items() if sum(a) == deg]

            def comp(x, xi):
                out = np.zeros((x.shape[0], self.r, self.r), dtype=complex)
                for a, c in items:
                    mono = np.prod((1j * xi) ** a, axis=-1)
                    out = out + mono[:, None, None] * c.evaluate(x)
                return out

            return comp

        return ClassicalSymbol(order=m, components=tuple(make(m - j) for j in range(m + 1)), d=self.d, r=self.r)


# finite-difference derivatives of symbol components ------------------------

_W4 = ((-2, 1.0 / 12), (-1, -8.0 / 12), (1, 8.0 / 12), (2, -1.0 / 12))


def _dx(f: Callable, x, xi, k: int, h: float):
    """Fourth-order central difference of f(x, xi) along x_k."""
    e = np.zeros(x.shape[1])
    e[k] = h
    return sum(w * f(x + s * e, xi) for s, w in _W4) / h


def _dxi(f: Callable, x, xi, k: int, h: float):
    e = np.zeros(xi.shape[1])
    e[k] = h
    return sum(w * f(x, xi + s * e) for s, w in _W4) / h


def _dx_dxi(f: Callable, x, xi, k: int, hx: float, hxi: float):
    return _dx(lambda y, z: _dxi(f, y, z, k, hxi), x, xi, k, hx)


def sub_symbol_generic(A: ClassicalSymbol, x, xi, h_x: float = 1e-3, h_xi: float = 1e-3) -> np.ndarray:
    """sigma^(1) + (i/2) d^2 sigma^(0) / dx^k dxi_k by finite differences.

    Fourth-order central stencils are used in both variables; their
    truncation error is far below roundoff at the default steps.
    """
    if A.depth < 2:
        raise ValueError("subprincipal symbol needs depth >= 2")
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = x.reshape(-1, A.d)
    Xi = np.asarray(xi, dtype=float).reshape(-1, A.d)
    f0, f1 = A.components[0], A.components[1]
    out = f1(X, Xi) + 0.5j * sum(_dx_dxi(f0, X, Xi, k, h_x, h_xi) for k in range(A.d))
    return out[0] if single else out


def poisson_bracket(fa: Callable, fb: Callable, x, xi, h_x: float = 1e-3, h_xi: float = 1e-3) -> np.ndarray:
    """{a, b} = sum_k da/dxi_k db/dx_k - da/dx_k db/dxi_k (matrix order kept)."""
    d = x.shape[1]
    out = 0
    for k in range(d):
        out = out + _dxi(fa, x, xi, k, h_xi) @ _dx(fb, x, xi, k, h_x)
        out = out - _dx(fa, x, xi, k, h_x) @ _dxi(fb, x, xi, k, h_xi)
    return out


def compose_symbols(A: ClassicalSymbol, B: ClassicalSymbol, h_x: float = 1e-3, h_xi: float = 1e-3) -> ClassicalSymbol:
    """Depth-2 symbol of AB from the composition rule, derivatives by finite differences."""
    if A.depth < 2 or B.depth < 2:
        raise ValueError("composition needs depth >= 2 on both factors")
    a0, a1 = A.components[:2]
    b0, b1 = B.components[:2]

    def c0(x, xi):
        return a0(x, xi) @ b0(x, xi)

    def c1(x, xi):
        out = a0(x, xi) @ b1(x, xi) + a1(x, xi) @ b0(x, xi)
        for k in range(A.d):
            out = out - 1j * (_dxi(a0, x, xi, k, h_xi) @ _dx(b0, x, xi, k, h_x))
        return out

    return ClassicalSymbol(order=A.order + B.order, components=(c0, c1), d=A.d, r=A.r)


def sub_product_residual(A: ClassicalSymbol, B: ClassicalSymbol, x, xi, AB: ClassicalSymbol | None = None, h_x: float = 1e-3, h_xi: float = 1e-3) -> float:
    """Norm of Sub(AB) - Sub(A) sB - sA Sub(B) - {sA, sB} / (2i).

    Returns the max over points when x, xi hold several rows.
    """
    if A.depth < 2 or B.depth < 2:
        raise ValueError("product rule needs depth >= 2")
    AB = compose_symbols(A, B, h_x, h_xi) if AB is None else AB
    X = np.asarray(x, dtype=float).reshape(-1, A.d)
    Xi = np.asarray(xi, dtype=float).reshape(-1, A.d)
    lhs = sub_symbol_generic(AB, X, Xi, h_x, h_xi)
    sa, sb = A.components[0](X, Xi), B.components[0](X, Xi)
    rhs = sub_symbol_generic(A, X, Xi, h_x, h_xi) @ sb + sa @ sub_symbol_generic(B, X, Xi, h_x, h_xi)
    rhs = rhs + poisson_bracket(A.components[0], B.components[0], X, Xi, h_x, h_xi) / 2j
    return float(np.linalg.norm(lhs - rhs, axis=(-2, -1)).max())


def dirac_symbol(D: DiracOperatorSpec) -> ClassicalSymbol:
    """Exact depth-2 symbol (i gamma^j xi_j, gamma^j b_j + psi) of D."""
    return DiffOp.from_dirac(D).symbol()


def dirac_squared_symbol(D: DiracOperatorSpec) -> ClassicalSymbol:
    """Exact full symbol of D^2 from Leibniz composition."""
    op = DiffOp.from_dirac(D)
    return op.compose(op).symbol()
