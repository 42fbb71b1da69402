"""First-order operators with trigonometric coefficients: self-adjointness,
the Bochner-Weitzenbock split and subprincipal symbols.
"""

import numpy as np

from spectra_forge.clifford import build_gamma
from spectra_forge.operators import (
    adjoint_residual,
    bw_residual,
    dirac_squared_symbol,
    dirac_symbol,
    random_selfadjoint_dirac,
    sub_product_residual,
    sub_symbol_dirac,
    sub_symbol_generic,
)

rng = np.random.default_rng(1)
mod = build_gamma(3)

# %% A random formally self-adjoint operator with frequencies up to 2.
D = random_selfadjoint_dirac(mod, 2, rng)
print("adjoint residual", adjoint_residual(D))
print("D^2 = connection Laplacian + endomorphism, residual", bw_residual(D))

# %% The closed-form subprincipal symbol against finite differences of the full symbol.
x = rng.uniform(0, 2 * np.pi, (50, 3))
xi = rng.normal(size=(50, 3))
A = dirac_symbol(D)
err = np.abs(sub_symbol_dirac(D, x) - sub_symbol_generic(A, x, xi)).max()
print(f"closed form vs finite differences: {err:.2e}")

# %% Sub(AB) = Sub(A) s(B) + s(A) Sub(B) + {s(A), s(B)} / 2i, checked on D^2.
print(f"product rule residual: {sub_product_residual(A, A, x, xi, AB=dirac_squared_symbol(D)):.2e}")
