"""Massless operator built from a twisted orthonormal frame.

The frame rotates the (x1, x2) plane by theta(x0). The induced Dirac
operator has no potential, yet its subprincipal symbol is the scalar
-theta'(x0)/2 coming from the Christoffel symbols of the frame.
"""

import numpy as np

from spectra_forge.clifford import build_gamma
from spectra_forge.frames import christoffel, massless_dirac, rotation_frame, sub_massless_theoretical, trig_angle
from spectra_forge.operators import adjoint_residual, compatibility_defect, sub_symbol_dirac

theta = trig_angle(0, const=0.2, sin={1: 1.0}, cos={2: 0.5})
frame = rotation_frame(3, (1, 2), theta)
D = massless_dirac(frame, build_gamma(3))
print("connection compatibility", compatibility_defect(D))
print("adjoint residual", adjoint_residual(D))

# %% Profile along x0.
x = np.zeros((9, 3))
x[:, 0] = np.linspace(0, 2 * np.pi, 9)
sub = sub_symbol_dirac(D, x)
print("Christoffel antisymmetry defect", christoffel(frame, x).antisymmetry_defect())
for xi, s, ref, dth in zip(x[:, 0], sub[:, 0, 0].real, sub_massless_theoretical(frame, x), theta.derivative(x[:, 0])):
    print(f"x0={xi:5.2f}  Sub={s:+.12f}  Christoffel={ref:+.12f}  -theta'/2={-dth / 2:+.12f}")
