"""Shared fixtures: exact T^3 spectra at the desk-scale cutoff, computed once."""

import numpy as np
import pytest

from spectra_forge.clifford import build_gamma
from spectra_forge.operators import dirac_spec
from spectra_forge.spectral import exact_modes

CUTOFF = 40.0
C = 0.3


@pytest.fixture(scope="session")
def mod3():
    return build_gamma(3)


@pytest.fixture(scope="session")
def ops3(mod3):
    return {
        "free": dirac_spec(mod3),
        "scalar": dirac_spec(mod3, psi=C * np.eye(2)),
        "grade1": dirac_spec(mod3, psi=C * 1j * mod3.gammas[0]),
    }


@pytest.fixture(scope="session")
def spectra3(ops3):
    return {name: exact_modes(D, CUTOFF, keep_vectors=False) for name, D in ops3.items()}


@pytest.fixture(scope="session")
def scalar_with_vectors(ops3):
    return exact_modes(ops3["scalar"], CUTOFF)


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
