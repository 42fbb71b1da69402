"""Gamma matrices, the hat map and grade projections.

Run with ``python3 demos/01_clifford_module.py``.
"""

import numpy as np

from spectra_forge.clifford import build_gamma, grade_basis, grade_eigenvalue, grade_project, hat, is_generalized_potential

# %% Generators from Jordan-Wigner strings: anti-Hermitian, squaring to -1.
for d in range(1, 7):
    mod = build_gamma(d)
    G = mod.gammas
    defect = max(np.abs(G[j] @ G[k] + G[k] @ G[j] + 2 * (j == k) * np.eye(mod.r)).max() for j in range(d) for k in range(d))
    print(f"d={d}  rank {mod.r:2d}  Clifford defect {defect:.1e}")

# %% The hat map acts on grade k by (-1)^k (2k - d).
mod = build_gamma(3)
for k, basis in grade_basis(mod).items():
    lam = grade_eigenvalue(3, k)
    err = max(np.abs(hat(mod, e) - lam * e).max() for e in basis)
    print(f"grade {k}: {len(basis)} elements, eigenvalue {lam:+d}, defect {err:.1e}")

# %% Any endomorphism splits into grades. A scalar potential breaks the generalized
# Dirac structure; a pure grade-1 potential i c gamma keeps it.
rng = np.random.default_rng(0)
A = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
dec = grade_project(mod, A)
print("reconstruction error", np.abs(dec.total() - A).max())
print("0.3 Id generalized potential:", is_generalized_potential(mod, 0.3 * np.eye(2)))
print("0.3 i gamma^0 generalized potential:", is_generalized_potential(mod, 0.3j * mod.gammas[0]))
