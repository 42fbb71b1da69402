"""Spectral resolutions of Dirac-type operators on the torus.

Constant-coefficient operators are diagonalized exactly mode by mode: on
``exp(i k.x) v`` the operator acts as the Hermitian matrix
``d(k) = i gamma^j k_j + W``. Variable coefficients go through a
Fourier-Galerkin truncation, block-diagonalized along axes the coefficients
do not depend on (momentum along those axes is conserved).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .operators import DiracOperatorSpec, TrigMatrixField

DENSE_LIMIT = 4000
GROUP_RTOL = 1e-9


@dataclass(frozen=True)
class SpectralData:
    """Eigenvalue records of D.

    Record j is the section ``phi_j = (2 pi)^{-d/2} sum_b v[j, b] exp(i k_b.x)``
    with basis frequencies ``k_b = labels[j] + rel_freqs[b]``.

    Attributes:
        mu: Eigenvalues, sorted ascending, shape (n,).
        labels: Integer mode labels, shape (n, d).
        rel_freqs: Basis offsets shared by all records, shape (nb, d).
        vectors: Coefficient vectors (n, nb, r), or None if dropped.
        cutoff: Only |mu| <= cutoff is complete.
        trust_cutoff: Eigenvalues below this are free of truncation effects.
        d: Dimension.
        r: Bundle rank.
        method: "exact" or "galerkin".
    """

    mu: np.ndarray
    labels: np.ndarray
    rel_freqs: np.ndarray
    vectors: np.ndarray | None
    cutoff: float
    trust_cutoff: float
    d: int
    r: int
    method: str
    group_rtol: float = GROUP_RTOL

    def __len__(self):
        return self.mu.size

    def trusted(self) -> np.ndarray:
        """Boolean mask of records with |mu| <= trust_cutoff."""
        return np.abs(self.mu) <= self.trust_cutoff

    def restrict(self, mask) -> "SpectralData":
        vec = None if self.vectors is None else self.vectors[mask]
        return SpectralData(self.mu[mask], self.labels[mask], self.rel_freqs, vec, self.cutoff, self.trust_cutoff, self.d, self.r, self.method, self.group_rtol)

    def negated(self) -> "SpectralData":
        """Spectral data of -D (same eigenvectors, reversed order)."""
        order = np.arange(self.mu.size)[::-1]
        vec = None if self.vectors is None else self.vectors[order]
        return SpectralData(-self.mu[order], self.labels[order], self.rel_freqs, vec, self.cutoff, self.trust_cutoff, self.d, self.r, self.method, self.group_rtol)

    def groups(self) -> np.ndarray:
        """Degeneracy group id per record (records are sorted by mu)."""
        if self.mu.size == 0:
            return np.zeros(0, dtype=int)
        gap = np.diff(self.mu)
        tol = self.group_rtol * (1.0 + np.abs(self.mu[1:]))
        return np.concatenate([[0], np.cumsum(gap > tol)])


def _lattice(radius: float, d: int) -> np.ndarray:
    """All k in Z^d with |k| <= radius in lexicographic order."""
    R = int(np.floor(radius))
    axis = np.arange(-R, R + 1)
    k = np.stack(np.meshgrid(*([axis] * d), indexing="ij"), axis=-1).reshape(-1, d)
    return k[np.einsum("ij,ij->i", k, k) <= radius * radius + 1e-9]


def exact_modes(D: DiracOperatorSpec, cutoff: float, keep_vectors: bool = True, chunk: int = 65536) -> SpectralData:
    """Diagonalize a constant-coefficient operator mode by mode.

    Every lattice k with |k| <= cutoff + |W| is visited, which covers all
    eigenvalues |mu| <= cutoff since |d(k) v| >= (|k| - |W|) |v|.

    Raises:
        ValueError: For non-constant specs or non-Hermitian d(k).
    """
    if not D.constant_flag:
        raise ValueError("exact_modes needs a constant-coefficient operator")
    W = D.zeroth_order().mean()
    G = np.stack([g.mean() for g in D.gammas])
    sym = 1j * G
    if not np.allclose(sym, np.conj(np.swapaxes(sym, -1, -2)), atol=1e-12) or not np.allclose(W, W.conj().T, atol=1e-12):
        raise ValueError("d(k) is not Hermitian; certify self-adjointness first")
    radius = cutoff + np.linalg.norm(W, 2)
    ks = _lattice(radius, D.d)
    mus, labs, vecs = [], [], []
    for start in range(0, ks.shape[0], chunk):
        kb = ks[start:start + chunk]
        H = np.tensordot(kb.astype(float), sym, axes=(1, 0)) + W
        if keep_vectors:
            w, v = np.linalg.eigh(H)
        else:
            w, v = np.linalg.eigvalsh(H), None
        keep = np.abs(w) <= cutoff
        rows, cols = np.nonzero(keep)
        mus.append(w[rows, cols])
        labs.append(kb[rows])
        if keep_vectors:
            vecs.append(v[rows, :, cols][:, None, :])
    mu = np.concatenate(mus)
    order = np.argsort(mu, kind="stable")
    vectors = np.concatenate(vecs)[order] if keep_vectors else None
    return SpectralData(
        mu=mu[order],
        labels=np.concatenate(labs)[order],
        rel_freqs=np.zeros((1, D.d), dtype=int),
        vectors=vectors,
        cutoff=float(cutoff),
        trust_cutoff=float(cutoff),
        d=D.d,
        r=D.r,
        method="exact",
    )


def _coefficient_lookup(f: TrigMatrixField, diffs: np.ndarray) -> np.ndarray:
    """c_{diff} for an array of integer frequency differences (..., d)."""
    M = np.array(f.M)
    idx = diffs + M
    ok = np.all((idx >= 0) & (idx <= 2 * M), axis=-1)
    out = np.zeros(diffs.shape[:-1] + f.shape, dtype=complex)
    sel = tuple(idx[ok].T)
    out[ok] = f.coeffs[sel]
    return out


def galerkin_block(D: DiracOperatorSpec, freqs: np.ndarray) -> np.ndarray:
    """Matrix of D on span{exp(i k.x) e_a : k in freqs}, indexed (k, a)."""
    W = D.zeroth_order()
    diffs = freqs[:, None, :] - freqs[None, :, :]
    H = _coefficient_lookup(W, diffs)
    for j, G in enumerate(D.gammas):
        H = H + _coefficient_lookup(G, diffs) * (1j * freqs[None, :, j, None, None])
    nb, r = freqs.shape[0], D.r
    return H.transpose(0, 2, 1, 3).reshape(nb * r, nb * r)


def galerkin(D: DiracOperatorSpec, K_basis: int, dense_limit: int = DENSE_LIMIT, herm_tol: float = 1e-8) -> SpectralData:
    """Eigenpairs of D truncated to |k|_inf <= K_basis.

    Axes with no coefficient dependence split the problem into independent
    blocks labelled by the conserved momentum. The trust cutoff is K_basis/2.

    Raises:
        MemoryError: If a dense block exceeds ``dense_limit`` rows.
        ValueError: If an assembled block is not Hermitian.
    """
    d, r = D.d, D.r
    dep = D.dependent_axes()
    free = [ax for ax in range(d) if ax not in dep]
    axis = np.arange(-K_basis, K_basis + 1)
    if dep:
        rel = np.stack(np.meshgrid(*([axis] * len(dep)), indexing="ij"), axis=-1).reshape(-1, len(dep))
    else:
        rel = np.zeros((1, 0), dtype=int)
    rel_freqs = np.zeros((rel.shape[0], d), dtype=int)
    rel_freqs[:, dep] = rel
    size = rel_freqs.shape[0] * r
    if size > dense_limit:
        raise MemoryError(f"Galerkin block of size {size} exceeds dense limit {dense_limit}")
    if free:
        blk = np.stack(np.meshgrid(*([axis] * len(free)), indexing="ij"), axis=-1).reshape(-1, len(free))
    else:
        blk = np.zeros((1, 0), dtype=int)
    mus, labs, vecs = [], [], []
    for q in blk:
        lab = np.zeros(d, dtype=int)
        lab[free] = q
        H = galerkin_block(D, lab + rel_freqs)
        scale = max(np.abs(H).max(), 1.0)
        if np.abs(H - H.conj().T).max() > herm_tol * scale:
            raise ValueError("assembled Galerkin matrix is not Hermitian")
        w, v = np.linalg.eigh(0.5 * (H + H.conj().T))
        mus.append(w)
        labs.append(np.broadcast_to(lab, (w.size, d)))
        vecs.append(v.T.reshape(w.size, rel_freqs.shape[0], r))
    mu = np.concatenate(mus)
    order = np.argsort(mu, kind="stable")
    return SpectralData(
        mu=mu[order],
        labels=np.concatenate(labs)[order],
        rel_freqs=rel_freqs,
        vectors=np.concatenate(vecs)[order],
        cutoff=float(np.abs(mu).max()),
        trust_cutoff=K_basis / 2.0,
        d=d,
        r=r,
        method="galerkin",
    )


def group_average(S: SpectralData, values: np.ndarray) -> np.ndarray:
    """Replace each record's value by its degeneracy-group mean.

    Group sums are basis independent while single records inside a
    degenerate eigenspace are not; spreading the sum evenly keeps every
    spectral sum of the form sum_j w_j g(mu_j) unchanged.
    """
    gid = S.groups()
    if gid.size == 0:
        return values
    sums = np.bincount(gid, weights=values.real)
    if np.iscomplexobj(values):
        sums = sums + 1j * np.bincount(gid, weights=values.imag)
    counts = np.bincount(gid)
    return (sums / counts)[gid]


def group_sums(S: SpectralData, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return (group eigenvalue, group sum) pairs."""
    gid = S.groups()
    sums = np.bincount(gid, weights=np.real(values))
    first = np.concatenate([[0], np.flatnonzero(np.diff(gid)) + 1]) if gid.size else gid
    return S.mu[first], sums


def matrix_elements(S: SpectralData, F: TrigMatrixField, group: bool = True) -> np.ndarray:
    """Weights <F phi_j, phi_j>, reported as degeneracy-group means.

    Exact data use the zero-frequency coefficient of F (the only one that
    couples a plane wave to itself); Galerkin data use the full quadratic
    form in the truncated basis.
    """
    if F.shape != (S.r, S.r):
        raise ValueError("F rank does not match the spectral data")
    if S.vectors is None:
        if not np.allclose(F.mean(), F.mean()[0, 0] * np.eye(S.r)) or not F.is_constant():
            raise ValueError("eigenvectors were dropped; only scalar constant F is supported")
        w = np.full(S.mu.size, F.mean()[0, 0].real)
        return w
    if S.method == "exact" or S.rel_freqs.shape[0] == 1:
        c0 = F.mean()
        v = S.vectors[:, 0, :]
        w = np.einsum("na,ab,nb->n", v.conj(), c0, v)
    else:
        diffs = S.rel_freqs[:, None, :] - S.rel_freqs[None, :, :]
        Fm = _coefficient_lookup(F, diffs)
        w = np.einsum("npa,pqab,nqb->n", S.vectors.conj(), Fm, S.vectors)
    w = w.real if np.allclose(w.imag, 0, atol=1e-10) else w
    return group_average(S, w) if group else w


def local_density(S: SpectralData, x, trace_only: bool = False) -> np.ndarray:
    """Phi_j(x) = phi_j(x) phi_j(x)^dagger for every record.

    Returns (n, r, r), or (n,) traces when ``trace_only`` is set.
    """
    if S.vectors is None:
        raise ValueError("local density needs retained eigenvectors")
    x = np.asarray(x, dtype=float)
    k = S.labels[:, None, :] + S.rel_freqs[None, :, :]
    phase = np.exp(1j * (k @ x)) / (2 * np.pi) ** (S.d / 2)
    phi = np.einsum("nb,nba->na", phase, S.vectors)
    if trace_only:
        return np.sum(np.abs(phi) ** 2, axis=-1)
    return phi[:, :, None] * phi.conj()[:, None, :]


def heat_kernel(mu, t):
    return np.exp(-t * mu * mu)


def signed_heat_kernel(mu, t):
    return mu * np.exp(-t * mu * mu)


def resolvent_kernel(N: float) -> Callable:
    def g(mu, t):
        return (1.0 + t * mu * mu) ** (-N / 2)

    return g


def smoothed_trace(S: SpectralData, weights: np.ndarray, g: Callable, t: float) -> float:
    """sum_j w_j g(mu_j, t)."""
    if t <= 0:
        raise ValueError("t must be positive")
    return float(np.dot(weights, g(S.mu, t)))


def parseval_defect(S: SpectralData, s: TrigMatrixField) -> float:
    """| sum_j |<s, phi_j>|^2 - |s|^2 | / |s|^2 for a band-limited section."""
    if S.vectors is None:
        raise ValueError("parseval check needs eigenvectors")
    k = S.labels[:, None, :] + S.rel_freqs[None, :, :]
    coeff = np.zeros(k.shape[:2] + (S.r,), dtype=complex)
    M = np.array(s.M)
    idx = k + M
    ok = np.all((idx >= 0) & (idx <= 2 * M), axis=-1)
    coeff[ok] = s.coeffs[tuple(idx[ok].T)][..., 0]
    amp = (2 * np.pi) ** (S.d / 2) * np.einsum("nba,nba->n", S.vectors.conj(), coeff)
    total = s.l2_norm() ** 2
    return abs(float(np.sum(np.abs(amp) ** 2)) - total) / total


def write_csv(S: SpectralData, weights: np.ndarray, path, header: list[str] | None = None) -> None:
    """Write (mu, k1..kd, weight) rows."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for line in header or []:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(["mu"] + [f"k{i + 1}" for i in range(S.d)] + ["weight"])
        for mu, lab, wt in zip(S.mu, S.labels, weights):
            w.writerow([f"{mu:.17g}"] + [str(int(v)) for v in lab] + [f"{float(np.real(wt)):.17g}"])
