import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spectra_forge.clifford import build_gamma
from spectra_forge.operators import (
    DiffOp,
    TrigMatrixField,
    adjoint_residual,
    apply,
    bw_decompose,
    bw_residual,
    compatibility_defect,
    compose_symbols,
    dirac_spec,
    dirac_squared_symbol,
    dirac_symbol,
    endomorphism_symbol,
    h1_density,
    inner,
    random_hermitian_field,
    random_section,
    random_selfadjoint_dirac,
    sub_product_residual,
    sub_symbol_dirac,
    sub_symbol_generic,
    sub_symbol_laplacian,
)

TWO_PI = 2 * np.pi


def _field(rng, d=2, shape=(2, 2), M=2):
    box = rng.standard_normal((2 * M + 1,) * d + shape) + 1j * rng.standard_normal((2 * M + 1,) * d + shape)
    return TrigMatrixField(box)


# ---------------------------------------------------------------------------
# trigonometric fields
# ---------------------------------------------------------------------------


def test_from_terms_evaluates_to_the_series(rng):
    A = np.array([[1, 2j], [0, 1]])
    f = TrigMatrixField.from_terms({(1, 0): A, (0, -2): 3 * np.eye(2)}, 2)
    x = rng.uniform(0, TWO_PI, (7, 2))
    want = np.exp(1j * x[:, 0])[:, None, None] * A + 3 * np.exp(-2j * x[:, 1])[:, None, None] * np.eye(2)
    assert np.allclose(f.evaluate(x), want)
    assert f.M == (1, 2)
    assert np.allclose(f.coefficient((0, -2)), 3 * np.eye(2))
    assert np.allclose(f.coefficient((5, 5)), 0)


def test_field_rejects_even_box():
    with pytest.raises(ValueError):
        TrigMatrixField(np.zeros((4, 2, 2)))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 3))
def test_products_match_pointwise(seed, d):
    rng = np.random.default_rng(seed)
    f, g = _field(rng, d, M=1), _field(rng, d, M=2)
    x = rng.uniform(0, TWO_PI, (5, d))
    assert np.allclose((f @ g).evaluate(x), f.evaluate(x) @ g.evaluate(x), atol=1e-9)
    assert np.allclose((f + g).evaluate(x), f.evaluate(x) + g.evaluate(x))
    assert np.allclose((f - 2.0 * g).evaluate(x), f.evaluate(x) - 2 * g.evaluate(x))
    assert np.allclose(f.adjoint().evaluate(x), np.conj(np.swapaxes(f.evaluate(x), -1, -2)))


def test_constant_matrix_products(rng):
    f = _field(rng)
    A = rng.standard_normal((2, 2))
    x = rng.uniform(0, TWO_PI, (4, 2))
    assert np.allclose((f @ A).evaluate(x), f.evaluate(x) @ A)
    assert np.allclose((A @ f).evaluate(x), A @ f.evaluate(x))


def test_derivative_matches_finite_differences(rng):
    f = _field(rng, d=2, M=3)
    x = rng.uniform(0, TWO_PI, (3, 2))
    h = 1e-5
    for j in range(2):
        e = np.zeros(2)
        e[j] = h
        fd = (f.evaluate(x + e) - f.evaluate(x - e)) / (2 * h)
        assert np.allclose(f.derivative(j).evaluate(x), fd, atol=1e-7)


def test_from_function_recovers_trig_polynomial(rng):
    f = _field(rng, d=2, M=2)
    g = TrigMatrixField.from_function(f.evaluate, 2, n_grid=16)
    x = rng.uniform(0, TWO_PI, (6, 2))
    assert np.allclose(g.evaluate(x), f.evaluate(x), atol=1e-12)
    assert g.M == (2, 2)


def test_from_function_restricted_axes(rng):
    func = lambda x: np.exp(np.cos(x[:, 1]))[:, None, None] * np.eye(2)
    g = TrigMatrixField.from_function(func, 3, n_grid=64, axes=[1])
    assert g.dependent_axes() == (1,)
    x = rng.uniform(0, TWO_PI, (6, 3))
    assert np.allclose(g.evaluate(x), func(x), atol=1e-13)


def test_from_function_detects_under_resolution():
    func = lambda x: np.exp(20 * np.cos(x[:, 0]))[:, None, None] * np.eye(1)
    with pytest.raises(ValueError):
        TrigMatrixField.from_function(func, 1, n_grid=16)


def test_inner_product_is_l2(rng):
    u, v = random_section(2, 2, 2, rng), random_section(2, 2, 2, rng)
    # trapezoid rule is exact for trigonometric polynomials of this degree
    n = 12
    g = TWO_PI * np.arange(n) / n
    x = np.stack(np.meshgrid(g, g, indexing="ij"), -1).reshape(-1, 2)
    quad = np.sum(np.conj(v.evaluate(x)) * u.evaluate(x)) * (TWO_PI / n) ** 2
    assert np.isclose(inner(u, v), quad)


def test_hermitian_field(rng):
    H = random_hermitian_field(2, 3, 2, rng)
    assert H.is_hermitian()
    x = rng.uniform(0, TWO_PI, (4, 2))
    vals = H.evaluate(x)
    assert np.allclose(vals, np.conj(np.swapaxes(vals, -1, -2)))


# ---------------------------------------------------------------------------
# Dirac operators
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("d", [1, 2, 3, 4])
def test_principal_symbol_squares_to_laplacian(d, rng):
    D = dirac_spec(build_gamma(d))
    xi = rng.standard_normal(d)
    s = D.symbol_matrix(xi)
    assert np.allclose(s @ s, (xi @ xi) * np.eye(D.r))


@pytest.mark.parametrize("d", [2, 3])
def test_random_operators_are_selfadjoint_and_compatible(d, rng):
    D = random_selfadjoint_dirac(build_gamma(d), 2, rng)
    assert compatibility_defect(D) < 1e-13
    assert adjoint_residual(D, trials=4, seed=1) < 1e-12
    assert not D.constant_flag


def test_nonhermitian_potential_fails_adjoint_check(mod3):
    D = dirac_spec(mod3, psi=np.array([[0, 1], [0, 0]]))
    assert adjoint_residual(D, trials=4) > 1e-2


def test_apply_on_plane_wave(mod3):
    """D e^{ik.x} v = (i gamma.k + psi) e^{ik.x} v for constant coefficients."""
    psi = np.array([[0.2, 0.1j], [-0.1j, -0.4]])
    D = dirac_spec(mod3, psi=psi)
    k = (1, -2, 3)
    v = np.array([[1.0], [2.0 - 1j]])
    s = TrigMatrixField.from_terms({k: v}, 3)
    out = apply(D, s)
    assert np.allclose(out.coefficient(k), D.symbol_matrix(np.array(k)) @ v)


@pytest.mark.parametrize("seed", range(6))
def test_bochner_weitzenbock_random(seed):
    rng = np.random.default_rng(seed)
    d = 2 + seed % 2
    D = random_selfadjoint_dirac(build_gamma(d), 2, rng)
    assert bw_residual(D, trials=3, seed=seed) < 1e-10


def test_bochner_weitzenbock_constant_potential(mod3):
    """For psi = c Id: L_j = c gamma^j and V = (1 - d) c^2 Id."""
    c = 0.3
    D = dirac_spec(mod3, psi=c * np.eye(2))
    data = bw_decompose(D)
    for j in range(3):
        assert np.allclose(data.L[j].mean(), c * mod3.gammas[j])
    assert bw_residual(D, trials=2) < 1e-12
    # c^2 + sum_j (c gamma^j)^2
    assert np.allclose(data.V.mean(), (1 - 3) * c * c * np.eye(2))


def test_bochner_weitzenbock_with_frame_gammas(mod3):
    from spectra_forge.frames import massless_dirac, rotation_frame, trig_angle

    fr = rotation_frame(3, (1, 2), trig_angle(0, sin={1: 0.7}))
    D = massless_dirac(fr, mod3)
    assert bw_residual(D, trials=2) < 1e-10


def test_h1_density_scalar_potential(mod3):
    c = 0.3
    D = dirac_spec(mod3, psi=c * np.eye(2))
    h = h1_density(D, np.zeros(3))
    assert np.allclose(h, (4 * np.pi) ** -1.5 * (-2 * c) * np.eye(2))
    G = dirac_spec(mod3, psi=c * 1j * mod3.gammas[0])
    assert np.allclose(h1_density(G, np.zeros(3)), 0)


# ---------------------------------------------------------------------------
# symbols
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("d", [2, 3])
def test_sub_symbol_closed_form_vs_finite_differences(d, rng):
    D = random_selfadjoint_dirac(build_gamma(d), 2, rng)
    x = rng.uniform(0, TWO_PI, (20, d))
    xi = rng.standard_normal((20, d))
    assert np.abs(sub_symbol_dirac(D, x) - sub_symbol_generic(dirac_symbol(D), x, xi)).max() < 1e-8


def test_sub_symbol_laplacian_vs_finite_differences(rng):
    D = random_selfadjoint_dirac(build_gamma(3), 1, rng)
    x = rng.uniform(0, TWO_PI, (10, 3))
    xi = rng.standard_normal((10, 3))
    want = sub_symbol_generic(dirac_squared_symbol(D), x, xi)
    assert np.abs(sub_symbol_laplacian(D, x, xi) - want).max() < 1e-7


def test_dirac_symbol_is_homogeneous(rng):
    D = random_selfadjoint_dirac(build_gamma(3), 1, rng)
    assert dirac_symbol(D).homogeneity_defect(rng) < 1e-13
    assert dirac_squared_symbol(D).homogeneity_defect(rng) < 1e-13


def test_diffop_composition_matches_repeated_application(rng):
    D = random_selfadjoint_dirac(build_gamma(2), 1, rng)
    op = DiffOp.from_dirac(D)
    sq = op.compose(op)
    s = random_section(2, 2, 2, rng)
    assert (sq.apply(s) - apply(D, apply(D, s))).l2_norm() < 1e-10 * s.l2_norm()


def test_exact_and_finite_difference_composition_agree(rng):
    D = random_selfadjoint_dirac(build_gamma(3), 1, rng)
    A = dirac_symbol(D)
    fd = compose_symbols(A, A)
    exact = dirac_squared_symbol(D)
    x = rng.uniform(0, TWO_PI, (8, 3))
    xi = rng.standard_normal((8, 3))
    for j in range(2):
        assert np.allclose(fd(j, x, xi), exact(j, x, xi), atol=1e-8)


@pytest.mark.parametrize("seed", range(3))
def test_sub_product_rule(seed):
    rng = np.random.default_rng(seed)
    D = random_selfadjoint_dirac(build_gamma(3), 1, rng)
    A = dirac_symbol(D)
    F = random_hermitian_field(3, 2, 1, rng)
    B = endomorphism_symbol(F)
    x = rng.uniform(0, TWO_PI, (10, 3))
    xi = rng.standard_normal((10, 3))
    assert sub_product_residual(A, A, x, xi, AB=dirac_squared_symbol(D)) < 1e-7
    DF = DiffOp.from_dirac(D).compose(DiffOp.multiplication(F)).symbol()
    assert sub_product_residual(A, B, x, xi, AB=DF) < 1e-7
    FD = DiffOp.multiplication(F).compose(DiffOp.from_dirac(D)).symbol()
    assert sub_product_residual(B, A, x, xi, AB=FD) < 1e-7
