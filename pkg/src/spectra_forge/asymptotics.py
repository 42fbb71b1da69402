"""Asymptotic coefficients from spectral data.

Pipelines here turn eigenvalue records into expansion coefficients:
mollified counting functions, heat and resolvent traces, and the meromorphic
continuation of spectral zeta and eta functions through a Mellin split.
Closed-form coefficient formulas live alongside for comparison.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import mpmath
import numpy as np
from scipy.integrate import quad as scalar_quad
from scipy.interpolate import CubicSpline
from scipy.special import gamma as gamma_fn
from scipy.special import roots_legendre

from .operators import ClassicalSymbol, DiracOperatorSpec, TrigMatrixField, h1_density, sub_symbol_generic
from .residue import cosphere_integral, sphere_quadrature, torus_quadrature
from .spectral import SpectralData, group_sums, local_density, matrix_elements

TWO_PI = 2.0 * np.pi
COND_FLAG = 1e8


# ---------------------------------------------------------------------------
# mollifiers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MollifierSpec:
    """Mollifier choice.

    Attributes:
        kind: "fourier_bump" or "gaussian".
        delta: Fourier support half-width (bump) or width w (gaussian).
        grid: Tabulation step in mu for the bump.
        mu_max: Tabulation range; the bump is set to 0 beyond it.
    """

    kind: str = "fourier_bump"
    delta: float = 6.0
    grid: float = 0.005
    mu_max: float = 200.0


def _smooth_step(u):
    f = lambda z: np.where(z > 0, np.exp(-1.0 / np.maximum(z, 1e-300)), 0.0)
    return f(1 - u) / (f(1 - u) + f(u))


def bump_window(t, delta: float) -> np.ndarray:
    """Fourier side of the bump mollifier: 1 on |t| <= delta/2, 0 for |t| >= delta."""
    a = np.abs(np.asarray(t, dtype=float))
    h = delta / 2
    u = np.clip((a - h) / h, 0.0, 1.0)
    return np.where(a <= h, 1.0, np.where(a >= delta, 0.0, _smooth_step(u)))


class Mollifier:
    """Even Schwartz function chi with unit integral.

    Call it on an array of mu values. ``fourier(t)`` returns the Fourier
    transform normalized so that fourier(0) equals the integral of chi.
    """

    def __init__(self, spec: MollifierSpec, n_nodes: int = 1024):
        if spec.delta <= 0:
            raise ValueError("delta must be positive")
        self.spec = spec
        if spec.kind == "gaussian":
            w = spec.delta
            self._eval = lambda mu: np.exp(-0.5 * (mu / w) ** 2) / (w * np.sqrt(TWO_PI))
            self.fourier = lambda t: np.exp(-0.5 * (w * np.asarray(t)) ** 2)
            self.effective_width = w
            self.support = 12.0 * w
        elif spec.kind == "fourier_bump":
            delta = spec.delta
            h = delta / 2
            x, wx = roots_legendre(n_nodes)
            t = h + (x + 1) * h / 2
            wt = wx * h / 2 * bump_window(t, delta)
            grid = np.arange(0.0, spec.mu_max + spec.grid / 2, spec.grid)
            plateau = np.where(grid > 0, np.sin(grid * h) / (np.pi * np.where(grid > 0, grid, 1.0)), h / np.pi)
            vals = plateau.copy()
            for s in range(0, grid.size, 2048):
                vals[s:s + 2048] += np.cos(np.outer(grid[s:s + 2048], t)) @ wt / np.pi
            self._spline = CubicSpline(grid, vals)
            self._eval = self._bump_eval
            self.fourier = lambda tt: bump_window(tt, delta)
            # oscillation scale of chi; its tail decays faster than any power
            self.effective_width = TWO_PI / delta
            self.support = spec.mu_max
        else:
            raise ValueError(f"unknown mollifier kind {spec.kind!r}")

    def _bump_eval(self, mu):
        a = np.abs(mu)
        out = np.zeros_like(a, dtype=float)
        inside = a < self.spec.mu_max
        out[inside] = self._spline(a[inside])
        return out

    def __call__(self, mu) -> np.ndarray:
        return self._eval(np.asarray(mu, dtype=float))

    def check_torus(self, period: float = TWO_PI) -> None:
        """Warn when the Fourier support reaches the shortest closed geodesic."""
        if self.spec.kind == "fourier_bump" and self.spec.delta > period:
            warnings.warn(f"mollifier support {self.spec.delta} exceeds geodesic length {period:.4f}; periodic orbits pollute coefficients", RuntimeWarning)


def make_mollifier(spec: MollifierSpec) -> Mollifier:
    return Mollifier(spec)


def mollified_counting(weights, eigenvalues, chi: Mollifier, mu_grid, cutoff: float | None = None) -> np.ndarray:
    """(chi * N'_F)(mu) = sum_j w_j chi(mu - mu_j) by direct summation.

    Args:
        weights: Per-record weights.
        eigenvalues: Sorted eigenvalues.
        chi: Mollifier.
        mu_grid: Evaluation points.
        cutoff: Completeness bound of the data; enforces the safe region.

    Raises:
        ValueError: If the grid reaches within 6 mollifier widths of cutoff.
    """
    mu_grid = np.asarray(mu_grid, dtype=float)
    ev = np.asarray(eigenvalues, dtype=float)
    w = np.asarray(weights, dtype=float)
    if cutoff is not None and np.abs(mu_grid).max() + 6 * chi.effective_width >= cutoff:
        raise ValueError(f"grid max {np.abs(mu_grid).max():.3f} too close to spectral cutoff {cutoff}")
    order = np.argsort(ev, kind="stable")
    ev, w = ev[order], w[order]
    out = np.empty(mu_grid.size)
    for i, m in enumerate(mu_grid):
        lo, hi = np.searchsorted(ev, [m - chi.support, m + chi.support])
        out[i] = np.dot(w[lo:hi], chi(m - ev[lo:hi]))
    return out


# ---------------------------------------------------------------------------
# fits
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AsymptoticFit:
    """Least-squares fit of sum_k c_k x^{e_k}.

    Attributes:
        exponents: Powers of the expansion variable.
        coefficients: Fitted c_k.
        uncertainties: One-sigma errors from the residual covariance.
        window: (lo, hi) range of the samples used.
        condition: Condition number of the scaled design matrix.
        residual: RMS of the weighted residuals.
        flagged: True if condition exceeds 1e8.
        variable: Name of the expansion variable ("mu" or "t").
    """

    exponents: tuple
    coefficients: np.ndarray
    uncertainties: np.ndarray
    window: tuple
    condition: float
    residual: float
    flagged: bool
    variable: str = "mu"
    extra: dict = field(default_factory=dict)

    def coefficient(self, exponent: float) -> float:
        for e, c in zip(self.exponents, self.coefficients):
            if abs(e - exponent) < 1e-12:
                return float(c)
        raise KeyError(f"exponent {exponent} not in fit")

    def uncertainty(self, exponent: float) -> float:
        for e, s in zip(self.exponents, self.uncertainties):
            if abs(e - exponent) < 1e-12:
                return float(s)
        raise KeyError(f"exponent {exponent} not in fit")

    def predict(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return sum(c * x**e for e, c in zip(self.exponents, self.coefficients))

    def report(self) -> list[str]:
        lines = [f"fit over {self.variable} in [{self.window[0]:.6g}, {self.window[1]:.6g}], cond={self.condition:.3e}, flagged={self.flagged}"]
        for e, c, s in zip(self.exponents, self.coefficients, self.uncertainties):
            lines.append(f"  {self.variable}^{e:g}: {c:.12g} +/- {s:.3g}")
        return lines


def weighted_power_fit(x, y, exponents: Sequence[float], weight, variable: str = "mu") -> AsymptoticFit:
    """Solve min sum (weight * (y - sum c_k x^{e_k}))^2."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    weight = np.asarray(weight, dtype=float)
    J = np.stack([x**e for e in exponents], axis=1) * weight[:, None]
    b = y * weight
    # column scaling keeps the condition number meaningful
    colscale = np.linalg.norm(J, axis=0)
    Js = J / colscale
    coef_s, *_ = np.linalg.lstsq(Js, b, rcond=None)
    coef = coef_s / colscale
    res = b - J @ coef
    dof = max(x.size - len(exponents), 1)
    sigma2 = float(res @ res) / dof
    cond = float(np.linalg.cond(Js))
    cov = sigma2 * np.linalg.pinv(Js.T @ Js) / np.outer(colscale, colscale)
    unc = np.sqrt(np.abs(np.diag(cov)))
    return AsymptoticFit(
        exponents=tuple(float(e) for e in exponents),
        coefficients=coef,
        uncertainties=unc,
        window=(float(x.min()), float(x.max())),
        condition=cond,
        residual=float(np.sqrt(np.mean(res**2))),
        flagged=cond > COND_FLAG,
        variable=variable,
    )


def fit_counting(mu, series, window, d: int, K: int = 3, m: int = 0) -> AsymptoticFit:
    """Fit sum_{k<K} A_k mu^{d+m-1-k} on the window with weight mu^{-(d+m-1)}."""
    if not 1 <= K <= 3:
        raise ValueError("K must be in 1..3")
    mu = np.asarray(mu, dtype=float)
    sel = (mu >= window[0]) & (mu <= window[1])
    if sel.sum() < K + 1:
        raise ValueError("not enough samples inside the fit window")
    top = d + m - 1
    fit = weighted_power_fit(mu[sel], np.asarray(series)[sel], [top - k for k in range(K)], mu[sel] ** (-float(top)))
    if fit.flagged:
        warnings.warn(f"ill-conditioned counting fit (cond={fit.condition:.2e})", RuntimeWarning)
    return fit


def counting_pipeline(S: SpectralData, weights, chi: Mollifier, window=None, n_grid: int = 81, K: int = 3, m: int = 0) -> tuple[AsymptoticFit, np.ndarray, np.ndarray]:
    """Mollified counting on a default window [cutoff/3, 2 cutoff/3], then fit."""
    lam = min(S.cutoff, S.trust_cutoff)
    window = (lam / 3, 2 * lam / 3) if window is None else window
    grid = np.linspace(window[0], window[1], n_grid)
    series = mollified_counting(weights, S.mu, chi, grid, cutoff=lam)
    return fit_counting(grid, series, window, S.d, K=K, m=m), grid, series


def local_counting_fit(S: SpectralData, x, chi: Mollifier, window=None, K: int = 2, n_grid: int = 81) -> AsymptoticFit:
    """Fit the trace of the smoothed local spectral density at x.

    Coefficients estimate Tr L_k(D)(x) as multiples of mu^{d-1-k}.
    """
    w = local_density(S, x, trace_only=True)
    fit, _, _ = counting_pipeline(S, w, chi, window=window, n_grid=n_grid, K=K)
    return fit


# ---------------------------------------------------------------------------
# closed forms
# ---------------------------------------------------------------------------


def _as_field(F, D: DiracOperatorSpec) -> TrigMatrixField:
    if isinstance(F, TrigMatrixField):
        return F
    F = np.eye(D.r) if F is None else np.asarray(F, dtype=complex)
    return TrigMatrixField.constant(F, D.d)


def _torus_n(*fields) -> int:
    return 2 * sum(f.max_freq for f in fields) + 2


def a0_theoretical(D: DiracOperatorSpec, F=None, order: int = 16) -> float:
    """(1 / (2 (2 pi)^d)) integral over T*_1 M of Tr(sigma_F + sigma_F sigma_D)."""
    F = _as_field(F, D)
    quad = sphere_quadrature(D.d, order)
    torus = torus_quadrature(D.d, _torus_n(F, *D.gammas))

    def integrand(x, xi):
        f = F.evaluate(x)
        g = np.stack([G.evaluate(x) for G in D.gammas], axis=1)
        sig = 1j * np.einsum("nk,nkab->nab", xi, g)
        return np.trace(f + f @ sig, axis1=-2, axis2=-1)

    val = cosphere_integral(integrand, quad, torus) / (2 * TWO_PI**D.d)
    return float(val.real)


def a1_theoretical_dirac(D: DiracOperatorSpec, F=None) -> float:
    """(1/Gamma(d/2)) integral of Tr(F H_1), H_1 = (4 pi)^{-d/2} (psi_hat - (d-2) psi)/2."""
    F = _as_field(F, D)
    torus = torus_quadrature(D.d, _torus_n(F, D.psi, *D.gammas))
    h = h1_density(D, torus.points)
    val = np.dot(torus.weights, np.trace(F.evaluate(torus.points) @ h, axis1=-2, axis2=-1))
    return float(val.real / gamma_fn(D.d / 2))


def a1_theoretical_laplace(A: ClassicalSymbol, P_sub: Callable, d: int, m: float, orders=(12, 20), n_torus: int = 8, tol: float = 1e-8, h_x: float = 1e-3, h_xi: float = 1e-3) -> float:
    """(2 pi)^{-d} integral of Tr(Sub(A) + ((1 - d - m)/2) sigma_A Sub(P)).

    Evaluated at two sphere orders; disagreement above tol raises.
    """
    coef = (1 - d - m) / 2

    def integrand(x, xi):
        val = sub_symbol_generic(A, x, xi, h_x, h_xi) + coef * A.components[0](x, xi) @ P_sub(x, xi)
        return np.trace(val, axis1=-2, axis2=-1)

    torus = torus_quadrature(d, n_torus)
    vals = [cosphere_integral(integrand, sphere_quadrature(d, o), torus) / TWO_PI**d for o in orders]
    if abs(vals[1] - vals[0]) > tol * max(1.0, abs(vals[1])):
        raise ValueError(f"quadrature refinement disagrees by {abs(vals[1] - vals[0]):.3e}")
    return float(vals[1].real)


def l0_theoretical(d: int, r: int) -> float:
    """Tr L_0 = r (4 pi)^{-d/2} / Gamma(d/2)."""
    return float(r * (4 * np.pi) ** (-d / 2) / gamma_fn(d / 2))


def l1_theoretical(D: DiracOperatorSpec, x) -> float:
    """Tr L_1(x) = Tr H_1(x) / Gamma(d/2)."""
    return float(np.trace(h1_density(D, x)).real / gamma_fn(D.d / 2))


def resolvent_factor(d: int, m: int, k: int, N: float) -> float:
    """B_k^{(N)} / A_k = (Gamma((d+m-k)/2)/2) Gamma((N+k-d-m)/2) / Gamma(N/2)."""
    return float(gamma_fn((d + m - k) / 2) / 2 * gamma_fn((N + k - d - m) / 2) / gamma_fn(N / 2))


# ---------------------------------------------------------------------------
# heat traces
# ---------------------------------------------------------------------------


def _weights(S: SpectralData, F) -> np.ndarray:
    if F is None:
        return np.ones(S.mu.size)
    if isinstance(F, np.ndarray) and F.ndim == 1:
        return F
    if not isinstance(F, TrigMatrixField):
        F = TrigMatrixField.constant(np.asarray(F, dtype=complex), S.d)
    return np.real(matrix_elements(S, F))


def heat_trace(mu: np.ndarray, w: np.ndarray, t, signed: bool = False) -> np.ndarray:
    """sum_j w_j (mu_j)^s exp(-t mu_j^2) for each t, s = 1 if signed."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.empty(t.size)
    base = w * mu if signed else w
    mu2 = mu * mu
    for i, ti in enumerate(t):
        out[i] = np.dot(base, np.exp(-ti * mu2))
    return out


def _tail_bound(n_records: int, lam: float, d: int, t: float, signed: bool) -> float:
    """Weyl-density estimate of the heat trace beyond the cutoff."""
    # density ~ n d lam^{d-1} / Lambda^d integrated against exp(-t lam^2)
    x = t * lam * lam
    b = n_records * d * np.exp(-x) / (2 * x) * (1 + d / (2 * x))
    return b * (lam if signed else 1.0)


def default_heat_ladder(S: SpectralData, n: int = 8, eps: float = 1e-14, signed: bool = False, w=None) -> np.ndarray:
    """Geometric ladder t_min 2^{k/2} starting where the truncation is negligible."""
    lam = min(S.cutoff, S.trust_cutoff)
    t0 = np.log(1.0 / eps) / lam**2
    w = np.ones(S.mu.size) if w is None else w
    for _ in range(40):
        tr = abs(heat_trace(S.mu, w, t0, signed)[0])
        if _tail_bound(S.mu.size, lam, S.d, t0, signed) <= 1e-12 * max(tr, 1e-300):
            break
        t0 *= 2 ** 0.25
    return t0 * 2.0 ** (np.arange(n) / 2)


def heat_exponents(d: int, m: int, n_terms: int, first_k: int = 0) -> list[float]:
    """omega_k = (k - d - m) / 2 for k = first_k, ..."""
    return [(k - d - m) / 2 for k in range(first_k, first_k + n_terms)]


def heat_fit(S: SpectralData, F=None, mode: str = "plain", t_samples=None, exponents=None, weights=None, n_terms: int = 5, exclude_zero: bool = False) -> AsymptoticFit:
    """Fit the small-time expansion of tr(F D^s exp(-t D^2)), s = 0 (plain) or 1 (signed).

    Default exponents are (k - d - m)/2 with m = 0 (plain) or 1 (signed);
    the signed series starts at k = 1 because the k = 0 term is odd in xi.
    Samples whose truncation error estimate exceeds 1e-12 of the trace are
    rejected.
    """
    if mode not in ("plain", "signed"):
        raise ValueError("mode must be 'plain' or 'signed'")
    signed = mode == "signed"
    w = _weights(S, F) if weights is None else np.asarray(weights, dtype=float)
    mu = S.mu
    if exclude_zero:
        keep = np.abs(mu) > 1e-9
        mu, w = mu[keep], w[keep]
    if exponents is None:
        exponents = heat_exponents(S.d, 1 if signed else 0, n_terms, first_k=1 if signed else 0)
    t = default_heat_ladder(S, signed=signed, w=w) if t_samples is None else np.asarray(t_samples, dtype=float)
    vals = heat_trace(mu, w, t, signed)
    lam = min(S.cutoff, S.trust_cutoff)
    ok = np.array([_tail_bound(S.mu.size, lam, S.d, ti, signed) <= 1e-12 * max(abs(v), 1e-300) for ti, v in zip(t, vals)])
    if ok.sum() < len(exponents):
        raise ValueError(f"only {ok.sum()} heat samples survive truncation screening; need {len(exponents)}")
    lead = min(exponents)
    fit = weighted_power_fit(t[ok], vals[ok], exponents, t[ok] ** (-lead), variable="t")
    fit.extra.update(samples=t[ok], values=vals[ok], rejected=int((~ok).sum()))
    return fit


# ---------------------------------------------------------------------------
# zeta and eta continuation
# ---------------------------------------------------------------------------


class MellinContinuation:
    """Meromorphic continuation of zeta(z) = sum_{lambda_j > 0} w_j lambda_j^{-z}.

    With u = z/2 and f(t) = sum w_j exp(-t lambda_j^2),

        Gamma(u) zeta(2u) = int_0^1 t^{u-1} (f - sum_{k<K} c_k t^{w_k}) dt
                            + sum_{k<K} c_k / (u + w_k) + int_1^inf t^{u-1} f dt,

    where c_k come from a heat fit. Below the smallest trustworthy time the
    fitted model stands in for f. The large-time piece is summed exactly
    with incomplete gamma functions.
    """

    def __init__(self, mu, weights, fit: AsymptoticFit, K: int, t_min: float, n_nodes: int = 96, large_time_cut: float = 60.0):
        lam = np.abs(np.asarray(mu, dtype=float))
        w = np.asarray(weights, dtype=float)
        keep = lam > 1e-9
        self.lam, self.w = lam[keep], w[keep]
        self.exps = np.array(fit.exponents)
        self.coefs = np.array(fit.coefficients)
        order = np.argsort(self.exps)
        self.exps, self.coefs = self.exps[order], self.coefs[order]
        if K > self.exps.size:
            raise ValueError("heat fit has fewer terms than the subtraction order")
        self.K = K
        self.t_min = t_min
        x, wx = roots_legendre(n_nodes)
        s = np.log(t_min) * (1 - x) / 2  # log t from log t_min to 0
        self.s_nodes = s
        self.s_weights = wx * (-np.log(t_min)) / 2
        t = np.exp(s)
        f = heat_trace(self.lam, self.w, t)
        sub = sum(c * t**e for c, e in zip(self.coefs[:K], self.exps[:K]))
        self.remainder = f - sub
        # large-time piece: only small eigenvalues matter
        small = self.lam**2 < large_time_cut
        vals, idx = np.unique(np.round(self.lam[small], 12), return_inverse=True)
        self.small_lam = vals
        self.small_w = np.bincount(idx, weights=self.w[small]) if vals.size else np.zeros(0)

    def _large_time(self, u: complex) -> complex:
        total = mpmath.mpc(0)
        for lam, w in zip(self.small_lam, self.small_w):
            if w == 0:
                continue
            total += w * mpmath.power(lam, -2 * u) * mpmath.gammainc(u, lam * lam, mpmath.inf)
        return complex(total)

    def gamma_zeta(self, z: complex) -> complex:
        """Gamma(z/2) zeta(z)."""
        u = z / 2
        val = complex(np.dot(self.s_weights, np.exp(u * self.s_nodes) * self.remainder))
        for c, e in zip(self.coefs[self.K:], self.exps[self.K:]):
            val += c * self.t_min ** (u + e) / (u + e)
        for c, e in zip(self.coefs[: self.K], self.exps[: self.K]):
            val += c / (u + e)
        return val + self._large_time(u)

    def zeta(self, z: complex) -> complex:
        return self.gamma_zeta(z) / complex(mpmath.gamma(z / 2))

    def residue(self, z0: float, radius: float = 0.5, n: int = 32) -> float:
        """Contour-integral residue of zeta at z0."""
        theta = TWO_PI * (np.arange(n) + 0.5) / n
        zs = z0 + radius * np.exp(1j * theta)
        vals = np.array([self.zeta(z) for z in zs])
        return float(np.real(np.mean(vals * radius * np.exp(1j * theta))))


def _residue_pipeline(S: SpectralData, w: np.ndarray, s0: float, K: int, m: int, n_fit: int, radius: float) -> float:
    d = S.d
    if K <= d + m - s0:
        raise ValueError(f"subtraction order K={K} does not regularize s0={s0}")
    keep = np.abs(S.mu) > 1e-9
    t = default_heat_ladder(S, w=w)
    fit = heat_fit(S, weights=w, t_samples=t, exponents=heat_exponents(d, m, n_fit), exclude_zero=True)
    mc = MellinContinuation(S.mu[keep], w[keep], fit, K, t_min=float(t.min()))
    # the circle must not reach neighbouring poles at half-integer spacing
    return mc.residue(s0, radius=radius)


def zeta_residue(S: SpectralData, F=None, s0: float = 3.0, K: int = 3, n_fit: int = 5, radius: float = 0.5) -> float:
    """Residue at s0 of zeta(s, F, D^2) = sum_{mu_j != 0} <F phi_j, phi_j> |mu_j|^{-s}."""
    w = _weights(S, F)
    return _residue_pipeline(S, w, s0, K, 0, n_fit, radius)


def eta_residue(S: SpectralData, F=None, s0: float = 2.0, K: int = 3, n_fit: int = 5, radius: float = 0.5) -> float:
    """Residue at s0 of eta(s, F, D) = zeta(s, F Sign(D), D^2)."""
    w = _weights(S, F) * np.sign(S.mu)
    return _residue_pipeline(S, w, s0, K, 0, n_fit, radius)


# ---------------------------------------------------------------------------
# resolvent traces
# ---------------------------------------------------------------------------


def weyl_tail(mu: np.ndarray, w: np.ndarray, lam: float, kernel: Callable, d: int) -> tuple[float, float]:
    """Tail beyond lam of sum_j w_j kernel(|mu_j|) from a smooth count model.

    The weighted count of |mu_j| <= x on [lam/2, lam] is fitted with a
    degree-d polynomial; its derivative is integrated against the kernel
    from lam to infinity. Returns (tail, relative scatter of the count fit).
    """
    a = np.abs(mu)
    order = np.argsort(a)
    a, cw = a[order], np.cumsum(w[order])
    sel = (a >= lam / 2) & (a <= lam)
    xs, ys = a[sel], cw[sel]
    if xs.size > 4000:
        pick = np.linspace(0, xs.size - 1, 4000).astype(int)
        xs, ys = xs[pick], ys[pick]
    coef = np.polyfit(xs / lam, ys, d)
    scatter = float(np.std(ys - np.polyval(coef, xs / lam)) / max(abs(ys).max(), 1e-300))
    dens = np.polyder(coef)
    val, _ = scalar_quad(lambda x: np.polyval(dens, x / lam) / lam * kernel(x), lam, np.inf, limit=200)
    return float(val), scatter


def resolvent_trace(S: SpectralData, w: np.ndarray, N: float, t, tail: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """sum_j w_j (1 + t mu_j^2)^{-N/2}, with optional Weyl tail completion.

    Returns (trace, tail contribution) arrays over t.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    lam = min(S.cutoff, S.trust_cutoff)
    inside = np.abs(S.mu) <= lam
    mu, ww = S.mu[inside], w[inside]
    vals, tails = np.empty(t.size), np.zeros(t.size)
    for i, ti in enumerate(t):
        vals[i] = np.dot(ww, (1 + ti * mu * mu) ** (-N / 2))
        if tail:
            tails[i], _ = weyl_tail(mu, ww, lam, lambda x: (1 + ti * x * x) ** (-N / 2), S.d)
    return vals + tails, tails


def default_resolvent_ladder(S: SpectralData, N: float, n: int = 8, tail_fraction: float = 0.02, span: float = 4.0) -> np.ndarray:
    """Geometric ladder starting where the analytic tail is ~tail_fraction of the trace."""
    lam = min(S.cutoff, S.trust_cutoff)
    d = S.d
    # with a Weyl count C x^d: tail/trace ~ R (t lam^2)^{-(N-d)/2}
    R = 2 * gamma_fn(N / 2) / ((N - d) * gamma_fn(d / 2) * gamma_fn((N - d) / 2))
    t0 = (R / tail_fraction) ** (2 / (N - d)) / lam**2
    return t0 * span ** (np.arange(n) / (n - 1))


def resolvent_fit(S: SpectralData, F=None, N: float = 5.0, t_samples=None, n_terms: int = 4, max_tail: float = 0.05, weights=None) -> AsymptoticFit:
    """Fit tr(F (1 + t D^2)^{-N/2}) ~ sum_k B_k t^{(k-d)/2}.

    The finite spectrum is completed by a Weyl tail (see weyl_tail); samples
    whose tail exceeds ``max_tail`` of the trace raise.
    """
    if N <= S.d:
        raise ValueError("N must exceed d")
    w = _weights(S, F) if weights is None else np.asarray(weights, dtype=float)
    t = default_resolvent_ladder(S, N) if t_samples is None else np.asarray(t_samples, dtype=float)
    vals, tails = resolvent_trace(S, w, N, t)
    frac = np.abs(tails) / np.maximum(np.abs(vals), 1e-300)
    if np.any(frac > max_tail):
        raise ValueError(f"tail fraction {frac.max():.3e} exceeds bound {max_tail}")
    exps = heat_exponents(S.d, 0, n_terms)
    fit = weighted_power_fit(t, vals, exps, t ** (-min(exps)), variable="t")
    fit.extra.update(samples=t, values=vals, tail_fraction=frac)
    return fit
