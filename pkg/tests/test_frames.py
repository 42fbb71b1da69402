import numpy as np
import pytest

from spectra_forge.clifford import build_gamma
from spectra_forge.frames import (
    AngleFunction,
    angle_from_callable,
    christoffel,
    massless_dirac,
    rotation_frame,
    sub_massless_theoretical,
    trig_angle,
)
from spectra_forge.operators import (
    adjoint_residual,
    bw_residual,
    compatibility_defect,
    dirac_symbol,
    sub_symbol_dirac,
    sub_symbol_generic,
)
from spectra_forge.spectral import galerkin

TWO_PI = 2 * np.pi


@pytest.fixture(scope="module")
def twisted():
    theta = trig_angle(0, const=0.2, sin={1: 1.0}, cos={2: 0.5})
    return theta, rotation_frame(3, (1, 2), theta)


def test_trig_angle_matches_formula(rng):
    th = trig_angle(1, const=0.2, sin={1: 1.0}, cos={2: 0.5})
    s = rng.uniform(0, TWO_PI, 9)
    assert np.allclose(th(s), 0.2 + np.sin(s) + 0.5 * np.cos(2 * s))
    assert np.allclose(th.derivative(s), np.cos(s) - np.sin(2 * s))


def test_angle_must_be_real():
    with pytest.raises(ValueError):
        AngleFunction(axis=0, freqs=np.array([1]), coeffs=np.array([1.0 + 0j]))


def test_angle_from_callable():
    th = angle_from_callable(0, lambda s: np.sin(s) ** 3)
    s = np.linspace(0, TWO_PI, 11)
    assert np.allclose(th(s), np.sin(s) ** 3, atol=1e-12)
    with pytest.raises(ValueError, match="periodic"):
        angle_from_callable(0, lambda s: 0.3 * s)


def test_rotation_frame_validation():
    th = trig_angle(0, sin={1: 1.0})
    with pytest.raises(ValueError):
        rotation_frame(3, (1, 1), th)
    with pytest.raises(ValueError):
        rotation_frame(3, (0, 3), th)
    with pytest.raises(ValueError):
        rotation_frame(2, (0, 1), trig_angle(2, sin={1: 1.0}))


def test_frame_is_orthonormal_and_derivative_is_exact(twisted, rng):
    _, fr = twisted
    fr = fr.then(rotation_frame(3, (0, 1), trig_angle(2, cos={1: 0.4})))
    x = rng.uniform(0, TWO_PI, (6, 3))
    O = fr.evaluate(x)
    assert np.allclose(O @ np.swapaxes(O, -1, -2), np.eye(3))
    h = 1e-6
    dO = fr.derivative(x)
    for l in range(3):
        e = np.zeros(3)
        e[l] = h
        fd = (fr.evaluate(x + e) - fr.evaluate(x - e)) / (2 * h)
        assert np.allclose(dO[:, l], fd, atol=1e-8)


def test_christoffel_antisymmetric(twisted, rng):
    _, fr = twisted
    fr = fr.then(rotation_frame(3, (0, 2), trig_angle(1, sin={2: 0.3})))
    G = christoffel(fr, rng.uniform(0, TWO_PI, (5, 3)))
    assert G.antisymmetry_defect() < 1e-14


def test_single_rotation_subprincipal_profile(twisted, rng):
    """Rotation in the (x1, x2) plane about x0: Sub = -theta'(x0) / 2."""
    theta, fr = twisted
    x = rng.uniform(0, TWO_PI, (12, 3))
    assert np.allclose(sub_massless_theoretical(fr, x), -0.5 * theta.derivative(x[:, 0]))


def test_massless_operator(twisted, mod3, rng):
    theta, fr = twisted
    D = massless_dirac(fr, mod3)
    assert compatibility_defect(D) < 1e-12
    assert adjoint_residual(D, trials=3) < 1e-12
    assert bw_residual(D, trials=2) < 1e-10
    assert D.dependent_axes() == (0,)
    x = rng.uniform(0, TWO_PI, (30, 3))
    xi = rng.standard_normal((30, 3))
    sub = sub_symbol_dirac(D, x)
    want = -0.5 * theta.derivative(x[:, 0])[:, None, None] * np.eye(2)
    assert np.abs(sub - want).max() < 1e-12
    assert np.abs(sub_symbol_generic(dirac_symbol(D), x, xi) - want).max() < 1e-8


def test_massless_gammas_follow_the_frame(twisted, mod3, rng):
    _, fr = twisted
    D = massless_dirac(fr, mod3)
    x = rng.uniform(0, TWO_PI, (4, 3))
    O = fr.evaluate(x)
    for l in range(3):
        want = np.einsum("nk,kab->nab", O[:, :, l], mod3.gammas)
        assert np.allclose(D.gammas[l].evaluate(x), want, atol=1e-13)


def test_massless_sub_needs_d3(mod3):
    fr = rotation_frame(2, (0, 1), trig_angle(0, sin={1: 1.0}))
    with pytest.raises(ValueError):
        sub_massless_theoretical(fr, np.zeros(2))
    with pytest.raises(ValueError):
        massless_dirac(fr, mod3)


def test_constant_rotation_is_isospectral(mod3):
    """A constant frame rotation is a change of basis: same spectrum as the free operator."""
    fr = rotation_frame(3, (1, 2), trig_angle(0, const=0.7))
    D = massless_dirac(fr, mod3)
    assert D.constant_flag
    S = galerkin(D, 4)
    k = np.stack(np.meshgrid(*[np.arange(-4, 5)] * 3, indexing="ij"), -1).reshape(-1, 3)
    free = np.sort(np.concatenate([np.linalg.norm(k, axis=1), -np.linalg.norm(k, axis=1)]))
    assert np.allclose(np.sort(S.mu), free, atol=1e-12)
