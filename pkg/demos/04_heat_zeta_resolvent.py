"""Three more routes to the same coefficients: heat traces, zeta/eta
residues and resolvent powers, all from one stored spectrum.
"""

import math

import numpy as np

from spectra_forge.asymptotics import eta_residue, heat_fit, resolvent_factor, resolvent_fit, zeta_residue
from spectra_forge.clifford import build_gamma
from spectra_forge.operators import dirac_spec
from spectra_forge.spectral import exact_modes

c = 0.3
mod = build_gamma(3)
S0 = exact_modes(dirac_spec(mod), 40.0, keep_vectors=False)
Sc = exact_modes(dirac_spec(mod, psi=c * np.eye(2)), 40.0, keep_vectors=False)

# %% tr exp(-t D^2) ~ Gamma(3/2) A_0 t^{-3/2}; tr D exp(-t D^2) ~ Gamma(3/2) A_1 t^{-3/2}.
plain = heat_fit(S0, mode="plain")
signed = heat_fit(Sc, mode="signed")
print(f"plain heat  {plain.coefficient(-1.5):.8f}  vs 2 pi^(3/2) = {2 * np.pi**1.5:.8f}")
print(f"signed heat {signed.coefficient(-1.5):.8f}  vs -4 c pi^(3/2) = {-4 * c * np.pi**1.5:.8f}")

# %% Poles of zeta(s) = tr |D|^{-s} and eta(s) = tr D |D|^{-s-1}.
print(f"Res zeta at 3: {zeta_residue(S0, s0=3):.8f}  (8 pi = {8 * np.pi:.8f})")
print(f"Res zeta at 2: {zeta_residue(S0, s0=2):.2e}")
print(f"Res eta at 2:  {eta_residue(Sc, s0=2):.6f}  (-16 pi c = {-16 * np.pi * c:.6f})")

# %% tr (1 + t D^2)^{-N/2}, with the truncated tail completed by its Weyl asymptotics.
b = {N: resolvent_fit(S0, N=N).coefficient(-1.5) for N in (5, 7)}
print(f"B_0^(5) = {b[5]:.6f}  vs 8 pi / 3 = {8 * math.pi / 3:.6f}")
print(f"B_0^(5)/B_0^(7) = {b[5] / b[7]:.6f}  vs {resolvent_factor(3, 0, 0, 5) / resolvent_factor(3, 0, 0, 7):.6f}")
