import csv

import numpy as np
import pytest

from spectra_forge.clifford import build_gamma
from spectra_forge.operators import TrigMatrixField, dirac_spec, random_section
from spectra_forge.spectral import (
    exact_modes,
    galerkin,
    group_sums,
    local_density,
    matrix_elements,
    parseval_defect,
    smoothed_trace,
    heat_kernel,
    write_csv,
)

from conftest import C, CUTOFF


def _lattice(R, d):
    ax = np.arange(-int(R) - 2, int(R) + 3)
    return np.stack(np.meshgrid(*[ax] * d, indexing="ij"), -1).reshape(-1, d)


def test_exact_scalar_potential_matches_closed_form(spectra3):
    """psi = c Id: eigenvalues c +- |k| for every k."""
    k = _lattice(CUTOFF + 1, 3)
    n = np.linalg.norm(k, axis=1)
    want = np.concatenate([C + n, C - n])
    want = np.sort(want[np.abs(want) <= CUTOFF])
    assert np.array_equal(want.size, spectra3["scalar"].mu.size)
    assert np.allclose(spectra3["scalar"].mu, want, atol=1e-12)


def test_exact_grade1_potential_matches_closed_form(spectra3):
    """psi = c i gamma^0 shifts the momentum: eigenvalues +-|k + c e_0|."""
    k = _lattice(CUTOFF + 1, 3).astype(float)
    k[:, 0] += C
    n = np.linalg.norm(k, axis=1)
    want = np.sort(np.concatenate([n, -n]))
    want = want[np.abs(want) <= CUTOFF]
    assert np.allclose(spectra3["grade1"].mu, want, atol=1e-12)


def test_desk_scale_size(spectra3):
    # about 2 * (4/3) pi 40^3 records
    assert 5.0e5 < len(spectra3["free"]) < 5.6e5


def test_exact_rejects_variable_coefficients(rng):
    from spectra_forge.operators import random_selfadjoint_dirac

    D = random_selfadjoint_dirac(build_gamma(2), 1, rng)
    with pytest.raises(ValueError):
        exact_modes(D, 5.0)


def test_galerkin_constant_matches_exact(mod3):
    psi = np.array([[0.3, 0.1 - 0.2j], [0.1 + 0.2j, -0.1]])
    D = dirac_spec(mod3, psi=psi)
    K = 5
    G = galerkin(D, K)
    E = exact_modes(D, 4.0)
    inside = np.abs(G.mu) <= 4.0
    assert np.allclose(G.mu[inside], E.mu, atol=1e-12)


@pytest.mark.parametrize("axis", [0, 2])
def test_galerkin_pure_gauge_is_isospectral(mod3, axis):
    """b_j = i d_j phi Id is a gauge transform of the free operator."""
    d = 3
    phi_coef = 0.4
    # phi = 0.4 sin(x_axis), d phi = 0.4 cos(x_axis)
    terms = {}
    for s in (1, -1):
        n = [0] * d
        n[axis] = s
        terms[tuple(n)] = 0.5j * phi_coef * np.eye(2)
    b = [None] * d
    b[axis] = TrigMatrixField.from_terms(terms, d)
    D = dirac_spec(mod3, b=b)
    K = 12
    G = galerkin(D, K)
    assert G.rel_freqs.shape[0] == 2 * K + 1
    # 5.9 avoids the degenerate shell |k| = 6 where roundoff decides membership
    free = exact_modes(dirac_spec(mod3), 5.9)
    trusted = np.abs(G.mu) <= 5.9
    assert np.allclose(G.mu[trusted], free.mu, atol=1e-10)


def test_galerkin_resource_guard(mod3):
    from spectra_forge.operators import random_selfadjoint_dirac

    D = random_selfadjoint_dirac(mod3, 1, np.random.default_rng(0))
    with pytest.raises(MemoryError):
        galerkin(D, 20, dense_limit=4000)


def test_galerkin_completeness_parseval(rng):
    from spectra_forge.operators import random_selfadjoint_dirac

    D = random_selfadjoint_dirac(build_gamma(2), 1, rng)
    S = galerkin(D, 6)
    s = random_section(2, 2, 3, rng)
    assert parseval_defect(S, s) < 1e-12


def test_matrix_elements_exact(mod3, ops3):
    S = exact_modes(ops3["scalar"], 6.0)
    F = TrigMatrixField.constant(np.diag([2.0, -1.0]), 3)
    w = matrix_elements(S, F)
    # on each degeneracy group the weights sum to a trace over an invariant subspace
    mus, sums = group_sums(S, w)
    assert mus.size == sums.size
    # trace over a full k-block of both eigenvalues is Tr F
    assert np.isclose(np.sum(w), np.trace(np.diag([2.0, -1.0])) * len(S) / 2, rtol=0.2)
    assert np.allclose(matrix_elements(S, TrigMatrixField.constant(np.eye(2), 3)), 1.0)


def test_matrix_elements_group_sum_basis_independent(mod3):
    """Free operator has large degeneracies; group sums do not depend on the chosen eigenbasis."""
    D = dirac_spec(mod3)
    S = exact_modes(D, 3.0)
    F = TrigMatrixField.constant(np.array([[1.0, 0.5], [0.5, -2.0]]), 3)
    raw = matrix_elements(S, F, group=False)
    avg = matrix_elements(S, F)
    _, s_raw = group_sums(S, raw)
    _, s_avg = group_sums(S, avg)
    assert np.allclose(s_raw, s_avg)


def test_matrix_elements_need_vectors_for_nonscalar(spectra3):
    with pytest.raises(ValueError):
        matrix_elements(spectra3["free"], TrigMatrixField.constant(np.diag([1.0, 0.0]), 3))


def test_local_density_constant_coefficients(ops3):
    S = exact_modes(ops3["scalar"], 5.0)
    tr = local_density(S, np.array([0.4, 1.1, 2.0]), trace_only=True)
    assert np.allclose(tr, (2 * np.pi) ** -3)
    full = local_density(S, np.zeros(3))
    assert np.allclose(np.trace(full, axis1=1, axis2=2).real, tr)


def test_restrict_negated_groups(ops3):
    S = exact_modes(ops3["scalar"], 4.0)
    N = S.negated()
    assert np.all(np.diff(N.mu) >= 0)
    assert np.allclose(np.sort(-S.mu), N.mu)
    pos = S.restrict(S.mu > 0)
    assert np.all(pos.mu > 0)
    gid = S.groups()
    assert gid[0] == 0 and np.all(np.diff(gid) >= 0)


def test_smoothed_trace(spectra3):
    S = spectra3["free"]
    t = 0.05
    # theta-function oracle: sum_k exp(-t |k|^2) = (sum_n exp(-t n^2))^3
    n = np.arange(-200, 201)
    theta = np.sum(np.exp(-t * n * n)) ** 3
    assert np.isclose(smoothed_trace(S, np.ones(len(S)), heat_kernel, t), 2 * theta, rtol=1e-12)
    with pytest.raises(ValueError):
        smoothed_trace(S, np.ones(len(S)), heat_kernel, 0.0)


def test_write_csv(tmp_path, ops3):
    S = exact_modes(ops3["scalar"], 2.0)
    path = tmp_path / "spec.csv"
    write_csv(S, np.ones(len(S)), path, header=["demo"])
    lines = path.read_text().splitlines()
    assert lines[0] == "# demo"
    rows = list(csv.reader(lines[1:]))
    assert rows[0] == ["mu", "k1", "k2", "k3", "weight"]
    assert len(rows) - 1 == len(S)
    assert float(rows[1][0]) == S.mu[0]
