import numpy as np
import pytest

from spectra_forge.asymptotics import a0_theoretical, a1_theoretical_dirac
from spectra_forge.clifford import build_gamma
from spectra_forge.operators import (
    ClassicalSymbol,
    TrigMatrixField,
    dirac_spec,
    endomorphism_symbol,
    random_hermitian_field,
)
from spectra_forge.residue import (
    ak_via_residue,
    homogeneous_expand,
    res_pair,
    res_total,
    res_via_sub,
    sphere_quadrature,
    sphere_volume,
    torus_quadrature,
)

PI = np.pi


@pytest.mark.parametrize("d,vol", [(2, 2 * PI), (3, 4 * PI), (4, 2 * PI**2)])
def test_sphere_quadrature_volume_and_moments(d, vol):
    q = sphere_quadrature(d, 16)
    assert sphere_volume(d) == pytest.approx(vol)
    assert q.weights.sum() == pytest.approx(vol, rel=1e-13)
    assert np.allclose(np.linalg.norm(q.nodes, axis=1), 1)
    # int x_1^2 = vol / d, int x_1^4 = 3 vol / (d (d + 2)), odd moments vanish
    assert q.integrate(q.nodes[:, 0] ** 2) == pytest.approx(vol / d, rel=1e-13)
    assert q.integrate(q.nodes[:, -1] ** 4) == pytest.approx(3 * vol / (d * (d + 2)), rel=1e-13)
    assert abs(q.integrate(q.nodes[:, 0] ** 3 * q.nodes[:, 1])) < 1e-13


def test_sphere_quadrature_dimension_guard():
    with pytest.raises(ValueError):
        sphere_quadrature(5)


def test_torus_quadrature_exact_for_trig_polynomials():
    t = torus_quadrature(2, 8)
    f = np.cos(3 * t.points[:, 0]) * np.sin(t.points[:, 1]) + 1
    assert np.dot(t.weights, f) == pytest.approx((2 * PI) ** 2)


def _scalar_symbol(d, r, order, fields):
    """Components F_j(x) |xi|^{order - j}."""
    comps = tuple((lambda F, j: (lambda x, xi: F.evaluate(x) * np.linalg.norm(xi, axis=1)[:, None, None] ** (order - j)))(F, j) for j, F in enumerate(fields))
    return ClassicalSymbol(order=order, components=comps, d=d, r=r)


def test_res_total_closed_form(rng):
    d = 2
    g = random_hermitian_field(d, 2, 1, rng)
    q, t = sphere_quadrature(d, 12), torus_quadrature(d, 6)
    val = res_total(lambda x, xi: g.evaluate(x) * np.linalg.norm(xi, axis=1)[:, None, None] ** -2, q, t)
    # (2pi)^{-2} (2pi)^2 Tr(mean g) 2 pi
    assert val == pytest.approx(float(np.trace(g.mean()).real) * 2 * PI, rel=1e-12)


def test_res_total_rejects_wrong_degree():
    q, t = sphere_quadrature(2, 8), torus_quadrature(2, 4)
    with pytest.raises(ValueError):
        res_total(lambda x, xi: np.linalg.norm(xi, axis=1)[:, None, None] ** -1 * np.eye(1), q, t)


def test_res_via_sub_vs_res_total(rng):
    """Dual route: the mixed-derivative term integrates out, leaving res of sigma^(1)."""
    d = 2
    F0 = random_hermitian_field(d, 2, 1, rng)
    F1 = random_hermitian_field(d, 2, 1, rng)
    A = _scalar_symbol(d, 2, 1 - d, [F0, F1])
    q, t = sphere_quadrature(d, 16), torus_quadrature(d, 8)
    direct = res_total(A.components[1], q, t)
    assert res_via_sub(A, q, t) == pytest.approx(direct, rel=1e-7)
    with pytest.raises(ValueError):
        res_via_sub(_scalar_symbol(d, 2, 0, [F0, F1]), q, t)


@pytest.mark.parametrize("seed", range(3))
def test_res_pair_swap_symmetry(seed):
    rng = np.random.default_rng(seed)
    d = 2
    A = endomorphism_symbol(random_hermitian_field(d, 2, 1, rng))
    B = _scalar_symbol(d, 2, -1, [random_hermitian_field(d, 2, 1, rng), random_hermitian_field(d, 2, 1, rng)])
    q, t = sphere_quadrature(d, 16), torus_quadrature(d, 8)
    ab, ba = res_pair(A, B, q, t), res_pair(B, A, q, t)
    assert abs(ab) > 1e-3
    assert ab == pytest.approx(ba, abs=1e-9)


def test_homogeneous_expand_exact_parts():
    q = sphere_quadrature(3, 8)
    a, b = 0.7, -1.3

    def f(xi):
        n = np.linalg.norm(xi, axis=1)
        return ((n**-2) * (1 + a / n + b / n**2) + 0 * xi[:, 0])[:, None, None] * np.eye(2)

    exp = homogeneous_expand(f, -2, 2, q, [2, 3, 5, 8, 13])
    assert np.allclose(exp.component(-2), np.eye(2))
    assert np.allclose(exp.component(-3), a * np.eye(2))
    assert np.allclose(exp.component(-4), b * np.eye(2))
    with pytest.raises(ValueError):
        exp.component(-7)
    with pytest.raises(ValueError):
        homogeneous_expand(f, -2, 2, q, [0.5, 3, 5], validity_radius=1.0)


def test_ak_via_residue_scalar(ops3):
    A0 = ak_via_residue(ops3["scalar"], np.eye(2), 0)
    A1 = ak_via_residue(ops3["scalar"], np.eye(2), 1)
    assert A0 == pytest.approx(4 * PI, rel=5e-3)
    assert A1 == pytest.approx(-8 * PI * 0.3, rel=2e-2)
    assert abs(ak_via_residue(ops3["grade1"], None, 1)) < 2e-2 * 8 * PI * 0.3


@pytest.mark.parametrize("seed", range(3))
def test_ak_via_residue_random_constant_potential(seed, mod3):
    """Independent of the closed forms: both routes for a generic Hermitian psi and F."""
    rng = np.random.default_rng(seed)
    H = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    psi = 0.15 * (H + H.conj().T)
    G = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    F = G + G.conj().T
    D = dirac_spec(mod3, psi=psi)
    Ff = TrigMatrixField.constant(F, 3)
    assert ak_via_residue(D, F, 0) == pytest.approx(a0_theoretical(D, Ff), rel=1e-5, abs=1e-6)
    assert ak_via_residue(D, F, 1) == pytest.approx(a1_theoretical_dirac(D, Ff), rel=1e-5, abs=1e-6)


def test_ak_via_residue_guards(mod3):
    D = dirac_spec(mod3)
    with pytest.raises(ValueError):
        ak_via_residue(D, None, 2)
    var = dirac_spec(mod3, psi=TrigMatrixField.from_terms({(1, 0, 0): np.eye(2), (-1, 0, 0): np.eye(2)}, 3))
    with pytest.raises(ValueError):
        ak_via_residue(var, None, 0)
