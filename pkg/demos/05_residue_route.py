"""A_0 and A_1 from symbols alone, without any eigenvalues.

The degree -d part of the symbol of (D + |D|)/2 |D|^{k-d-1} is extracted by
fitting a homogeneous expansion on a ladder of radii, then integrated over
the unit sphere.
"""

import numpy as np

from spectra_forge.asymptotics import a0_theoretical, a1_theoretical_dirac
from spectra_forge.clifford import build_gamma
from spectra_forge.operators import TrigMatrixField, dirac_spec
from spectra_forge.residue import ak_via_residue

mod = build_gamma(3)
for c in (0.0, 0.3, 1.0):
    D = dirac_spec(mod, psi=c * np.eye(2))
    print(f"c={c}: A_0 = {ak_via_residue(D, None, 0):.10f}  A_1 = {ak_via_residue(D, None, 1):+.8f}  (-8 pi c = {-8 * np.pi * c:+.8f})")

# %% A generic Hermitian potential and weight F, against the closed forms.
rng = np.random.default_rng(4)
H = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
G = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
psi, F = 0.2 * (H + H.conj().T), G + G.conj().T
D = dirac_spec(mod, psi=psi)
Ff = TrigMatrixField.constant(F, 3)
print(f"A_0(F): residue {ak_via_residue(D, F, 0):.10f}  closed form {a0_theoretical(D, Ff):.10f}")
print(f"A_1(F): residue {ak_via_residue(D, F, 1):.10f}  closed form {a1_theoretical_dirac(D, Ff):.10f}")
