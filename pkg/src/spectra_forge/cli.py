"""Config-driven batch driver.

Usage::

    spectra-forge <experiment> --config run.yaml [--seed N] [--out DIR]
    spectra-forge --list

Each experiment writes CSV tables to the output directory and prints a
pass/fail table. Exit status is 0 when every check passes, 1 when a check
fails, 2 for an invalid config and 3 when the requested spectrum is too
large to allocate.
"""

from __future__ import annotations

import argparse
import copy
import csv
import dataclasses
import datetime
import hashlib
import io
import json
import math
import os
import sys
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np
import yaml

from . import __version__
from .asymptotics import (
    MollifierSpec,
    _weights,
    a0_theoretical,
    a1_theoretical_dirac,
    counting_pipeline,
    eta_residue,
    heat_fit,
    l0_theoretical,
    l1_theoretical,
    local_counting_fit,
    make_mollifier,
    resolvent_factor,
    resolvent_fit,
    zeta_residue,
)
from .clifford import (
    GradeDecompositionError,
    build_gamma,
    grade_basis,
    grade_eigenvalue,
    grade_project,
    hat,
)
from .frames import massless_dirac, rotation_frame, sub_massless_theoretical, trig_angle
from .operators import (
    DiracOperatorSpec,
    TrigMatrixField,
    adjoint_residual,
    bw_residual,
    compatibility_defect,
    dirac_spec,
    dirac_squared_symbol,
    dirac_symbol,
    random_selfadjoint_dirac,
    sub_product_residual,
    sub_symbol_dirac,
    sub_symbol_generic,
)
from .residue import ak_via_residue
from .spectral import SpectralData, exact_modes, galerkin, write_csv

THREADS_ENV = "SPECTRA_FORGE_THREADS"

EXPERIMENTS = {
    "clifford-check": "Clifford relations, anti-Hermiticity and hat eigenvalues on grade bases",
    "bw-check": "Bochner-Weitzenbock residual on random self-adjoint operators",
    "counting-fit": "mollified counting fit of A_0, A_1 (and local L_0, L_1)",
    "heat-fit": "plain and signed heat trace expansions",
    "zeta": "zeta residues at s = d and s = d - 1",
    "eta": "eta residue at s = d - 1",
    "resolvent": "resolvent coefficients B_0^(N) and the Gamma-factor ratio",
    "residue": "A_0, A_1 through the residue route, independent of the spectrum",
    "sub-symbol": "subprincipal symbol closed form vs finite differences, product rule",
    "massless": "massless frame operator: Sub(D) profile against the Christoffel formula",
    "report": "full cross-check web with a pass/fail table",
}

DEFAULT_PARAMS: dict[str, dict[str, Any]] = {
    "clifford-check": {"dims": [1, 2, 3, 4, 5, 6], "tol": 1e-12},
    "bw-check": {"n_operators": 20, "dims": [2, 3], "max_freq": 2, "trials": 4, "tol": 1e-9},
    "counting-fit": {
        "mollifier": {"kind": "fourier_bump", "delta": 6.0},
        "window": None,
        "n_grid": 81,
        "K": 3,
        "rtol_a0": 0.01,
        "rtol_a1": 0.02,
        "local_points": [],
        "rtol_l0": 0.02,
        "rtol_l1": 0.03,
    },
    "heat-fit": {"n_terms": 5, "rtol": 1e-3},
    "zeta": {"K": 3, "n_fit": 5, "radius": 0.5, "rtol": 0.005},
    "eta": {"K": 3, "n_fit": 5, "radius": 0.5, "rtol": 0.02},
    "resolvent": {"N": [5, 7], "n_terms": 4, "max_tail": 0.05, "rtol": 0.005, "ratio_rtol": 0.01},
    "residue": {"k": [0, 1], "rtol": [0.005, 0.02]},
    "sub-symbol": {"n_points": 50, "tol": 1e-6, "product_tol": 1e-7},
    "massless": {"n_points": 64, "tol": 1e-6},
    "report": {"min_fit_cutoff": 20.0},
}


class ConfigError(ValueError):
    """Invalid config; carries the offending field path and source line."""

    def __init__(self, message: str, path: str = "", line: int | None = None, source: str = "<config>"):
        self.path, self.line, self.source = path, line, source
        where = f"{source}:{line}: " if line is not None else f"{source}: "
        super().__init__(f"{where}{path + ': ' if path else ''}{message}")


class ResourceError(RuntimeError):
    """Requested spectral computation exceeds the configured size limits."""


# ---------------------------------------------------------------------------
# config
# ---------------------------------------------------------------------------


def _line_map(text: str) -> dict[str, int]:
    """Map dotted field paths to 1-based source lines."""
    out: dict[str, int] = {}

    def walk(node, path):
        out[path] = node.start_mark.line + 1
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                walk(v, f"{path}.{k.value}" if path else str(k.value))
        elif isinstance(node, yaml.SequenceNode):
            for i, v in enumerate(node.value):
                walk(v, f"{path}[{i}]")

    root = yaml.compose(text)
    if root is not None:
        walk(root, "")
    return out


class _Validator:
    def __init__(self, lines: dict[str, int], source: str):
        self.lines, self.source = lines, source

    def fail(self, path: str, msg: str):
        probe = path
        while probe and probe not in self.lines:
            probe = probe.rsplit(".", 1)[0] if "." in probe else ""
        raise ConfigError(msg, path, self.lines.get(probe), self.source)

    def number(self, v, path, integer=False, positive=False):
        ok = isinstance(v, int) if integer else isinstance(v, (int, float))
        if isinstance(v, bool) or not ok:
            self.fail(path, f"expected {'an integer' if integer else 'a number'}, got {v!r}")
        if positive and v <= 0:
            self.fail(path, f"must be positive, got {v!r}")
        return v

    def complex_(self, v, path) -> complex:
        if isinstance(v, (list, tuple)) and len(v) == 2:
            return complex(self.number(v[0], path + "[0]"), self.number(v[1], path + "[1]"))
        return complex(self.number(v, path))


@dataclass
class ExperimentConfig:
    """Parsed experiment configuration.

    Fourier terms are dicts ``{k: [..d ints..], matrix: spec, coef: c}``
    where spec is ``identity``, ``gamma:i[,j..]`` (0-based product of
    generators) or an explicit r x r list, and c is a number or [re, im].
    """

    d: int = 3
    seed: int = 0
    output: str = "out"
    operator: dict = field(default_factory=lambda: {"gamma": "jordan-wigner", "psi": [], "b": [], "frame": None, "self_adjoint_certify": True})
    F: list = field(default_factory=list)
    spectral: dict = field(default_factory=lambda: {"cutoff": 40.0, "method": "auto", "K_basis": 6, "dense_limit": 4000, "max_records": 5_000_000, "export": False})
    experiment: dict = field(default_factory=lambda: {"name": None, "params": {}})

    def to_dict(self) -> dict:
        return copy.deepcopy(dataclasses.asdict(self))

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]

    def params(self, name: str) -> dict:
        """Defaults for ``name`` overridden by the config's experiment params."""
        out = copy.deepcopy(DEFAULT_PARAMS[name])
        if self.experiment.get("name") in (None, name):
            for k, v in (self.experiment.get("params") or {}).items():
                if isinstance(out.get(k), dict) and isinstance(v, dict):
                    out[k].update(v)
                else:
                    out[k] = v
        return out

    @classmethod
    def from_dict(cls, raw: dict | None, lines: dict[str, int] | None = None, source: str = "<config>") -> "ExperimentConfig":
        V = _Validator(lines or {}, source)
        raw = {} if raw is None else raw
        if not isinstance(raw, dict):
            V.fail("", "top level must be a mapping")
        base = cls()
        known = {f.name for f in dataclasses.fields(cls)}
        for key in raw:
            if key not in known:
                V.fail(str(key), f"unknown field (expected one of {sorted(known)})")
        d = V.number(raw.get("d", base.d), "d", integer=True, positive=True)
        if d > 8:
            V.fail("d", "dimension above 8 is not supported")
        seed = V.number(raw.get("seed", base.seed), "seed", integer=True)
        output = str(raw.get("output", base.output))

        op = dict(base.operator)
        op_raw = raw.get("operator") or {}
        if not isinstance(op_raw, dict):
            V.fail("operator", "expected a mapping")
        for key in op_raw:
            if key not in op:
                V.fail(f"operator.{key}", f"unknown field (expected one of {sorted(op)})")
        op.update(op_raw)
        if op["gamma"] != "jordan-wigner":
            V.fail("operator.gamma", f"unsupported gamma convention {op['gamma']!r} (only 'jordan-wigner')")
        op["psi"] = list(op["psi"] or [])
        op["b"] = [list(t or []) for t in (op["b"] or [])]
        if op["b"] and len(op["b"]) != d:
            V.fail("operator.b", f"expected {d} term lists, got {len(op['b'])}")
        r = build_gamma(d).r
        _terms_check(V, op["psi"], "operator.psi", d, r)
        for j, terms in enumerate(op["b"]):
            _terms_check(V, terms, f"operator.b[{j}]", d, r)
        if op["frame"] is not None:
            op["frame"] = _frame_check(V, op["frame"], d)
        op["self_adjoint_certify"] = bool(op["self_adjoint_certify"])

        F = list(raw.get("F") or [])
        _terms_check(V, F, "F", d, r)

        sp = dict(base.spectral)
        sp_raw = raw.get("spectral") or {}
        for key in sp_raw:
            if key not in sp:
                V.fail(f"spectral.{key}", f"unknown field (expected one of {sorted(sp)})")
        sp.update(sp_raw)
        sp["cutoff"] = float(V.number(sp["cutoff"], "spectral.cutoff", positive=True))
        if sp["method"] not in ("auto", "exact", "galerkin"):
            V.fail("spectral.method", "expected auto, exact or galerkin")
        for key in ("K_basis", "dense_limit", "max_records"):
            V.number(sp[key], f"spectral.{key}", integer=True, positive=True)
        sp["export"] = bool(sp["export"])

        ex = {"name": None, "params": {}}
        ex_raw = raw.get("experiment") or {}
        if not isinstance(ex_raw, dict):
            V.fail("experiment", "expected a mapping")
        ex.update(ex_raw)
        if ex["name"] is not None and ex["name"] not in EXPERIMENTS:
            V.fail("experiment.name", f"unknown experiment {ex['name']!r}")
        ex["params"] = dict(ex["params"] or {})
        if ex["name"] is not None:
            allowed = DEFAULT_PARAMS[ex["name"]]
            for key in ex["params"]:
                if allowed and key not in allowed:
                    V.fail(f"experiment.params.{key}", f"unknown parameter for {ex['name']} (expected one of {sorted(allowed)})")
        return cls(d=d, seed=seed, output=output, operator=op, F=F, spectral=sp, experiment=ex)

    @classmethod
    def parse(cls, text: str, source: str = "<config>") -> "ExperimentConfig":
        try:
            raw = yaml.safe_load(text)
            lines = _line_map(text)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            raise ConfigError(f"YAML syntax error: {getattr(exc, 'problem', exc)}", "", mark.line + 1 if mark else None, source) from None
        return cls.from_dict(raw, lines, source)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.parse(Path(path).read_text(encoding="utf-8"), str(path))


def _terms_check(V: _Validator, terms, path: str, d: int, r: int) -> None:
    if not isinstance(terms, list):
        V.fail(path, "expected a list of Fourier terms")
    for i, t in enumerate(terms):
        p = f"{path}[{i}]"
        if not isinstance(t, dict):
            V.fail(p, "a term must be a mapping with keys k, matrix, coef")
        extra = set(t) - {"k", "matrix", "coef"}
        if extra:
            V.fail(f"{p}.{sorted(extra)[0]}", "unknown term key")
        k = t.get("k", [0] * d)
        if not isinstance(k, list) or len(k) != d or any(isinstance(v, bool) or not isinstance(v, int) for v in k):
            V.fail(f"{p}.k", f"expected a list of {d} integers")
        V.complex_(t.get("coef", 1.0), f"{p}.coef")
        _matrix(V, t.get("matrix", "identity"), f"{p}.matrix", d, r)


def _matrix(V: _Validator, spec, path: str, d: int, r: int) -> np.ndarray:
    if isinstance(spec, str):
        if spec == "identity":
            return np.eye(r, dtype=complex)
        if spec.startswith("gamma:"):
            try:
                idx = [int(s) for s in spec[6:].split(",")]
            except ValueError:
                V.fail(path, f"bad generator list in {spec!r}")
            if any(not 0 <= i < d for i in idx):
                V.fail(path, f"generator index out of range 0..{d - 1}")
            G = build_gamma(d).gammas
            out = np.eye(r, dtype=complex)
            for i in idx:
                out = out @ G[i]
            return out
        V.fail(path, f"unknown matrix spec {spec!r}")
    if not isinstance(spec, list) or len(spec) != r or any(not isinstance(row, list) or len(row) != r for row in spec):
        V.fail(path, f"explicit matrix must be {r} x {r}")
    return np.array([[V.complex_(v, f"{path}[{i}][{j}]") for j, v in enumerate(row)] for i, row in enumerate(spec)])


def _frame_check(V: _Validator, frame, d: int) -> dict:
    if not isinstance(frame, dict):
        V.fail("operator.frame", "expected a mapping with plane, axis, const, cos, sin")
    out = {"plane": [1, 2], "axis": 0, "const": 0.0, "cos": {}, "sin": {}}
    for key in frame:
        if key not in out:
            V.fail(f"operator.frame.{key}", "unknown frame key")
    out.update(frame)
    plane = out["plane"]
    if not isinstance(plane, list) or len(plane) != 2 or plane[0] == plane[1] or any(not 0 <= int(a) < d for a in plane):
        V.fail("operator.frame.plane", f"expected two distinct axes in 0..{d - 1}")
    if not 0 <= V.number(out["axis"], "operator.frame.axis", integer=True) < d:
        V.fail("operator.frame.axis", "axis out of range")
    for key in ("cos", "sin"):
        if not isinstance(out[key], dict):
            V.fail(f"operator.frame.{key}", "expected {frequency: amplitude}")
        out[key] = {int(n): float(V.number(a, f"operator.frame.{key}.{n}")) for n, a in out[key].items()}
    out["const"] = float(V.number(out["const"], "operator.frame.const"))
    return out


# ---------------------------------------------------------------------------
# building objects
# ---------------------------------------------------------------------------


def _field(terms: list, d: int, r: int) -> TrigMatrixField:
    V = _Validator({}, "<config>")
    acc: dict[tuple, np.ndarray] = {}
    for t in terms:
        k = tuple(t.get("k", [0] * d))
        mat = V.complex_(t.get("coef", 1.0), "coef") * _matrix(V, t.get("matrix", "identity"), "matrix", d, r)
        acc[k] = acc.get(k, 0) + mat
    return TrigMatrixField.from_terms(acc, d, shape=(r, r))


def build_frame(cfg: ExperimentConfig):
    fr = cfg.operator["frame"]
    if fr is None:
        raise ConfigError("the massless experiment needs an operator.frame block", "operator.frame")
    angle = trig_angle(fr["axis"], const=fr["const"], cos=fr["cos"], sin=fr["sin"])
    return rotation_frame(cfg.d, tuple(fr["plane"]), angle)


def build_operator(cfg: ExperimentConfig) -> DiracOperatorSpec:
    mod = build_gamma(cfg.d)
    if cfg.operator["frame"] is not None:
        return massless_dirac(build_frame(cfg), mod)
    b = [_field(t, cfg.d, mod.r) for t in cfg.operator["b"]] or None
    return dirac_spec(mod, b=b, psi=_field(cfg.operator["psi"], cfg.d, mod.r))


def build_F(cfg: ExperimentConfig) -> TrigMatrixField:
    r = build_gamma(cfg.d).r
    if not cfg.F:
        return TrigMatrixField.constant(np.eye(r), cfg.d)
    return _field(cfg.F, cfg.d, r)


def estimate_records(D: DiracOperatorSpec, cutoff: float) -> int:
    """Lattice points visited by exact_modes times the rank."""
    W = D.zeroth_order().mean()
    R = cutoff + float(np.linalg.norm(W, 2))
    ball = math.pi ** (D.d / 2) / math.gamma(D.d / 2 + 1) * (R + 1) ** D.d
    return int(D.r * ball)


def spectrum(cfg: ExperimentConfig, D: DiracOperatorSpec, vectors: bool) -> SpectralData:
    """Exact or Galerkin spectrum after the resource pre-check."""
    sp = cfg.spectral
    method = sp["method"]
    if method == "auto":
        method = "exact" if D.constant_flag else "galerkin"
    if method == "exact":
        n = estimate_records(D, sp["cutoff"])
        # the lattice box (2R+1)^d is materialized before the ball filter
        box = int((2 * (sp["cutoff"] + 1) + 1) ** D.d)
        if n > sp["max_records"] or box > 20 * sp["max_records"]:
            raise ResourceError(f"about {n} spectral records requested; limit is {sp['max_records']}")
        return exact_modes(D, sp["cutoff"], keep_vectors=vectors)
    try:
        return galerkin(D, sp["K_basis"], dense_limit=sp["dense_limit"])
    except MemoryError as exc:
        raise ResourceError(str(exc)) from None


def rng_for(seed: int, name: str) -> np.random.Generator:
    """Counter-based stream keyed by name, so streams are independent of run order."""
    ss = np.random.SeedSequence(seed, spawn_key=(zlib.crc32(name.encode()),))
    return np.random.Generator(np.random.Philox(ss))


# ---------------------------------------------------------------------------
# results
# ---------------------------------------------------------------------------


@dataclass
class Check:
    name: str
    value: float
    reference: float
    tol: float
    mode: str = "rel"  # rel, abs or max

    @property
    def error(self) -> float:
        if self.mode == "max":
            return abs(self.value)
        diff = abs(self.value - self.reference)
        return diff / abs(self.reference) if self.mode == "rel" else diff

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.error) and self.error <= self.tol)


@dataclass
class Table:
    name: str
    columns: list
    rows: list
    units: str = ""


@dataclass
class Result:
    tables: list = field(default_factory=list)
    checks: list = field(default_factory=list)

    def extend(self, other: "Result") -> None:
        self.tables += other.tables
        self.checks += other.checks


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "pass" if v else "FAIL"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def write_table(table: Table, path: Path, cfg: ExperimentConfig, experiment: str) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(table.columns)
    for row in table.rows:
        w.writerow([_fmt(v) for v in row])
    stamp = datetime.datetime.now(datetime.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
    header = [
        f"# spectra-forge {__version__} experiment={experiment} table={table.name}",
        f"# config_hash={cfg.digest()} seed={cfg.seed}",
        f"# columns: {', '.join(table.columns)}",
    ]
    if table.units:
        header.append(f"# units: {table.units}")
    header.append(f"# generated={stamp}")
    path.write_text("\n".join(header) + "\n" + buf.getvalue(), encoding="utf-8")


def checks_table(checks: list) -> Table:
    rows = [(c.name, c.value, c.reference, c.error, c.tol, c.mode, c.passed) for c in checks]
    return Table("checks", ["check", "value", "reference", "error", "tolerance", "mode", "status"], rows)


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------


def _scalar(F: TrigMatrixField):
    """c if F = c Id, else None."""
    if not F.is_constant():
        return None
    m = F.mean()
    c = m[0, 0]
    return complex(c) if np.allclose(m, c * np.eye(m.shape[0]), atol=1e-14) else None


def spectral_weights(ctx) -> tuple[SpectralData, np.ndarray]:
    """Spectrum and the weights <F v, v>; eigenvectors only when F is not scalar."""
    F = ctx["F"]()
    c = _scalar(F)
    S = ctx["spectrum"](vectors=c is None)
    w = np.full(S.mu.size, c.real) if c is not None else _weights(S, F)
    return S, w


def _a1_scale(D: DiracOperatorSpec, F: TrigMatrixField) -> float:
    """|A_1| of psi = |psi|_max Id, used as the floor for near-zero A_1.

    Without a potential there is no natural A_1 scale and |A_0| is used.
    """
    pts = np.random.default_rng(0).uniform(0, 2 * np.pi, (64, D.d))
    c = float(np.linalg.norm(D.psi.evaluate(pts), ord=2, axis=(-2, -1)).max())
    if c < 1e-12:
        return abs(a0_theoretical(D, F))
    return abs(a1_theoretical_dirac(dirac_spec(D.mod, psi=c * np.eye(D.r)), F))


def _ref_check(name, value, ref, rtol, floor) -> Check:
    """Relative check, or absolute against rtol * floor when ref is tiny."""
    if abs(ref) >= floor:
        return Check(name, value, ref, rtol, "rel")
    return Check(name, value, ref, rtol * floor, "abs")


def run_clifford_check(cfg, p, ctx) -> Result:
    rows, checks = [], []
    for d in p["dims"]:
        mod = build_gamma(d)
        G = mod.gammas
        rel = max(float(np.abs(G[j] @ G[k] + G[k] @ G[j] + 2 * (j == k) * np.eye(mod.r)).max()) for j in range(d) for k in range(d))
        skew = max(float(np.abs(g + g.conj().T).max()) for g in G)
        hat_err, proj_err = 0.0, 0.0
        for k, basis in grade_basis(mod).items():
            lam = grade_eigenvalue(d, k)
            for e in basis:
                hat_err = max(hat_err, float(np.abs(hat(mod, e) - lam * e).max()))
                try:
                    dec = grade_project(mod, e)
                    proj_err = max(proj_err, float(np.abs(dec.total() - e).max()))
                except GradeDecompositionError:
                    proj_err = np.inf
        for name, v in (("clifford_relation", rel), ("anti_hermitian", skew), ("hat_eigenvalue", hat_err), ("grade_roundtrip", proj_err)):
            rows.append((d, mod.r, name, v))
            checks.append(Check(f"d={d} {name}", v, 0.0, p["tol"], "max"))
    return Result([Table("clifford", ["d", "r", "invariant", "max_defect"], rows)], checks)


def run_bw_check(cfg, p, ctx) -> Result:
    rng = ctx["rng"]("bw-check")
    rows, checks = [], []
    for i in range(p["n_operators"]):
        d = p["dims"][i % len(p["dims"])]
        D = random_selfadjoint_dirac(build_gamma(d), p["max_freq"], rng)
        seed = int(rng.integers(2**31))
        bw = bw_residual(D, trials=p["trials"], seed=seed, max_freq=p["max_freq"])
        adj = adjoint_residual(D, trials=p["trials"], seed=seed, max_freq=p["max_freq"])
        rows.append((i, d, bw, adj))
        checks.append(Check(f"random[{i}] d={d} bw", bw, 0.0, p["tol"], "max"))
    D = ctx["operator"]()
    bw = bw_residual(D, trials=p["trials"], seed=cfg.seed, max_freq=p["max_freq"])
    adj = adjoint_residual(D, trials=p["trials"], seed=cfg.seed, max_freq=p["max_freq"])
    rows.append(("config", D.d, bw, adj))
    checks.append(Check("config operator bw", bw, 0.0, p["tol"], "max"))
    return Result([Table("bw", ["operator", "d", "bw_residual", "adjoint_residual"], rows)], checks)


def run_counting_fit(cfg, p, ctx) -> Result:
    D, F = ctx["operator"](), ctx["F"]()
    local = [np.asarray(x, dtype=float) for x in p["local_points"]]
    if local:
        ctx["spectrum"](vectors=True)
    S, w = spectral_weights(ctx)
    chi = make_mollifier(MollifierSpec(**p["mollifier"]))
    window = tuple(p["window"]) if p["window"] else None
    fit, grid, series = counting_pipeline(S, w, chi, window=window, n_grid=p["n_grid"], K=p["K"])
    d = S.d
    a0, a1 = a0_theoretical(D, F), a1_theoretical_dirac(D, F)
    rows = [(f"A_{k}", e, c, s, ref) for k, (e, c, s, ref) in enumerate(zip(fit.exponents, fit.coefficients, fit.uncertainties, [a0, a1] + [float("nan")] * 8))]
    checks = [
        Check("A_0 counting fit", fit.coefficient(d - 1), a0, p["rtol_a0"]),
        _ref_check("A_1 counting fit", fit.coefficient(d - 2), a1, p["rtol_a1"], _a1_scale(D, F)),
    ]
    tables = [
        Table("counting_series", ["mu", "smoothed_count"], list(zip(grid, series)), units="mu in eigenvalue units"),
        Table("counting_fit", ["coefficient", "exponent", "value", "uncertainty", "theory"], rows),
    ]
    lrows = []
    for x in local:
        lf = local_counting_fit(S, x, chi, window=window, n_grid=p["n_grid"])
        l0, l1 = l0_theoretical(d, S.r), l1_theoretical(D, x)
        lrows.append(tuple(x) + (lf.coefficients[0], l0, lf.coefficients[1], l1))
        checks.append(Check(f"Tr L_0 at {x.tolist()}", lf.coefficients[0], l0, p["rtol_l0"]))
        checks.append(_ref_check(f"Tr L_1 at {x.tolist()}", lf.coefficients[1], l1, p["rtol_l1"], 1e-3 * abs(l0)))
    if lrows:
        tables.append(Table("local_counting", [f"x{i}" for i in range(d)] + ["trL0_fit", "trL0_theory", "trL1_fit", "trL1_theory"], lrows))
    return Result(tables, checks)


def run_heat_fit(cfg, p, ctx) -> Result:
    D, F = ctx["operator"](), ctx["F"]()
    S, w = spectral_weights(ctx)
    d = S.d
    gd = math.gamma(d / 2)
    plain = heat_fit(S, mode="plain", weights=w, n_terms=p["n_terms"])
    signed = heat_fit(S, mode="signed", weights=w, n_terms=p["n_terms"])
    h0 = gd * a0_theoretical(D, F)
    h1 = gd * a1_theoretical_dirac(D, F)
    tables = [
        Table("heat_plain_ladder", ["t", "trace"], list(zip(plain.extra["samples"], plain.extra["values"]))),
        Table("heat_signed_ladder", ["t", "trace"], list(zip(signed.extra["samples"], signed.extra["values"]))),
        Table(
            "heat_fit",
            ["mode", "exponent", "value", "uncertainty"],
            [("plain", e, c, s) for e, c, s in zip(plain.exponents, plain.coefficients, plain.uncertainties)]
            + [("signed", e, c, s) for e, c, s in zip(signed.exponents, signed.coefficients, signed.uncertainties)],
        ),
    ]
    checks = [
        Check("plain heat leading coefficient", plain.coefficient(-d / 2), h0, p["rtol"]),
        _ref_check("signed heat leading coefficient", signed.coefficient(-d / 2), h1, p["rtol"], gd * _a1_scale(D, F)),
    ]
    return Result(tables, checks)


def run_zeta(cfg, p, ctx) -> Result:
    D, F = ctx["operator"](), ctx["F"]()
    S, w = spectral_weights(ctx)
    d = S.d
    a0 = a0_theoretical(D, F)
    r_d = zeta_residue(S, w, s0=d, K=p["K"], n_fit=p["n_fit"], radius=p["radius"])
    r_d1 = zeta_residue(S, w, s0=d - 1, K=p["K"], n_fit=p["n_fit"], radius=p["radius"])
    rows = [(f"Res zeta s={d}", r_d, "mellin", 2 * a0), (f"Res zeta s={d - 1}", r_d1, "mellin", 0.0)]
    checks = [
        Check(f"Res zeta at s={d}", r_d, 2 * a0, p["rtol"]),
        Check(f"Res zeta at s={d - 1}", r_d1, 0.0, p["rtol"] * abs(2 * a0), "abs"),
    ]
    return Result([Table("zeta", ["quantity", "value", "method", "theory"], rows)], checks)


def run_eta(cfg, p, ctx) -> Result:
    D, F = ctx["operator"](), ctx["F"]()
    S, w = spectral_weights(ctx)
    d = S.d
    a1 = a1_theoretical_dirac(D, F)
    r = eta_residue(S, w, s0=d - 1, K=p["K"], n_fit=p["n_fit"], radius=p["radius"])
    checks = [_ref_check(f"Res eta at s={d - 1}", r, 2 * a1, p["rtol"], 2 * _a1_scale(D, F))]
    return Result([Table("eta", ["quantity", "value", "method", "theory"], [(f"Res eta s={d - 1}", r, "mellin", 2 * a1)])], checks)


def run_resolvent(cfg, p, ctx) -> Result:
    D, F = ctx["operator"](), ctx["F"]()
    S, w = spectral_weights(ctx)
    d = S.d
    a0 = a0_theoretical(D, F)
    rows, ladders, checks, b0 = [], [], [], {}
    for N in p["N"]:
        fit = resolvent_fit(S, N=N, weights=w, n_terms=p["n_terms"], max_tail=p["max_tail"])
        b0[N] = fit.coefficient(-d / 2)
        ref = 2 * a0 * resolvent_factor(d, 0, 0, N)
        rows.append((N, b0[N], fit.uncertainty(-d / 2), ref, float(fit.extra["tail_fraction"].max())))
        ladders += [(N, t, v, f) for t, v, f in zip(fit.extra["samples"], fit.extra["values"], fit.extra["tail_fraction"])]
        checks.append(Check(f"B_0^({N})", b0[N], ref, p["rtol"]))
    Ns = list(p["N"])
    for a, b in zip(Ns, Ns[1:]):
        ratio = resolvent_factor(d, 0, 0, a) / resolvent_factor(d, 0, 0, b)
        checks.append(Check(f"B_0^({a}) / B_0^({b})", b0[a] / b0[b], ratio, p["ratio_rtol"]))
    return Result(
        [
            Table("resolvent_fit", ["N", "B0", "uncertainty", "theory", "max_tail_fraction"], rows),
            Table("resolvent_ladder", ["N", "t", "trace", "tail_fraction"], ladders),
        ],
        checks,
    )


def run_residue(cfg, p, ctx) -> Result:
    D, F = ctx["operator"](), ctx["F"]()
    if not D.constant_flag or not F.is_constant():
        raise ConfigError("the residue route needs constant coefficients and a constant F", "operator")
    refs = {0: a0_theoretical(D, F), 1: a1_theoretical_dirac(D, F)}
    rtols = p["rtol"] if isinstance(p["rtol"], list) else [p["rtol"]] * len(p["k"])
    rows, checks = [], []
    for k, rtol in zip(p["k"], rtols):
        v = ak_via_residue(D, F, k)
        rows.append((f"A_{k}", v, "residue", abs(v - refs[k])))
        rows.append((f"A_{k}", refs[k], "closed_form", 0.0))
        floor = _a1_scale(D, F) if k == 1 else abs(refs[0])
        checks.append(_ref_check(f"A_{k} residue route", v, refs[k], rtol, floor))
    return Result([Table("residue", ["quantity", "value", "method", "residual"], rows)], checks)


def run_sub_symbol(cfg, p, ctx) -> Result:
    D = ctx["operator"]()
    rng = ctx["rng"]("sub-symbol")
    n = p["n_points"]
    x = rng.uniform(0, 2 * np.pi, (n, D.d))
    xi = rng.normal(size=(n, D.d))
    A = dirac_symbol(D)
    closed = sub_symbol_dirac(D, x)
    fd = sub_symbol_generic(A, x, xi)
    err = np.abs(closed - fd).max(axis=(-2, -1))
    prod = sub_product_residual(A, A, x, xi, AB=dirac_squared_symbol(D))
    rows = [tuple(x[i]) + tuple(xi[i]) + (err[i],) for i in range(n)]
    cols = [f"x{i}" for i in range(D.d)] + [f"xi{i}" for i in range(D.d)] + ["abs_error"]
    checks = [
        Check("Sub(D) closed form vs finite differences", float(err.max()), 0.0, p["tol"], "max"),
        Check("Sub product rule residual", prod, 0.0, p["product_tol"], "max"),
    ]
    return Result([Table("sub_symbol", cols, rows)], checks)


def run_massless(cfg, p, ctx) -> Result:
    frame = build_frame(cfg)
    D = ctx["operator"]()
    rng = ctx["rng"]("massless")
    n = p["n_points"]
    axis = cfg.operator["frame"]["axis"]
    x = rng.uniform(0, 2 * np.pi, (n, D.d))
    x[:, axis] = 2 * np.pi * np.arange(n) / n
    sub = sub_symbol_dirac(D, x)
    theory = sub_massless_theoretical(frame, x)
    err = np.abs(sub - theory[:, None, None] * np.eye(D.r)).max(axis=(-2, -1))
    rows = [tuple(x[i]) + (float(np.real(np.trace(sub[i]))) / D.r, float(theory[i]), float(err[i])) for i in range(n)]
    cols = [f"x{i}" for i in range(D.d)] + ["sub_numeric", "sub_theory", "abs_error"]
    checks = [
        Check("massless Sub(D) = -(Gamma sum)/2 Id", float(err.max()), 0.0, p["tol"], "max"),
        Check("connection compatibility", compatibility_defect(D), 0.0, 1e-10, "max"),
        Check("formal self-adjointness", adjoint_residual(D, trials=4, seed=cfg.seed), 0.0, 1e-10, "max"),
    ]
    return Result([Table("massless_sub", cols, rows)], checks)


def run_report(cfg, p, ctx) -> Result:
    """Every experiment applicable to the configured operator."""
    out = Result()
    names = ["clifford-check", "bw-check", "sub-symbol"]
    skipped = []
    spectral_names = ["counting-fit", "heat-fit", "zeta", "eta", "resolvent"]
    D = ctx["operator"]()
    if cfg.operator["frame"] is not None:
        names.append("massless")
    if D.constant_flag or cfg.spectral["K_basis"] / 2 >= p["min_fit_cutoff"]:
        names += spectral_names
    else:
        reason = f"Galerkin trust cutoff {cfg.spectral['K_basis'] / 2:g} below min_fit_cutoff {p['min_fit_cutoff']:g}"
        skipped += [(n, reason) for n in spectral_names]
    if D.constant_flag and ctx["F"]().is_constant():
        names.append("residue")
    else:
        skipped.append(("residue", "needs constant coefficients"))
    for name in names:
        params = cfg.params(name)
        if name == "clifford-check":
            params["dims"] = [cfg.d]
        res = RUNNERS[name](cfg, params, ctx)
        for t in res.tables:
            t.name = f"{name}.{t.name}"
        for c in res.checks:
            c.name = f"{name}: {c.name}"
        out.extend(res)
    if skipped:
        out.tables.append(Table("skipped", ["experiment", "reason"], skipped))
    return out


RUNNERS: dict[str, Callable] = {
    "clifford-check": run_clifford_check,
    "bw-check": run_bw_check,
    "counting-fit": run_counting_fit,
    "heat-fit": run_heat_fit,
    "zeta": run_zeta,
    "eta": run_eta,
    "resolvent": run_resolvent,
    "residue": run_residue,
    "sub-symbol": run_sub_symbol,
    "massless": run_massless,
    "report": run_report,
}


def _context(cfg: ExperimentConfig) -> dict:
    """Lazy, cached operator, F and spectrum shared across experiments."""
    cache: dict = {}

    def operator():
        if "D" not in cache:
            D = build_operator(cfg)
            if cfg.operator["self_adjoint_certify"]:
                res = adjoint_residual(D, trials=4, seed=cfg.seed)
                if res > 1e-9:
                    raise ConfigError(f"operator is not formally self-adjoint (residual {res:.3e})", "operator")
            cache["D"] = D
        return cache["D"]

    def F():
        if "F" not in cache:
            cache["F"] = build_F(cfg)
        return cache["F"]

    def spec(vectors: bool = False):
        key = "S" if not vectors else "Sv"
        if "Sv" in cache:
            return cache["Sv"]
        if key not in cache:
            cache[key] = spectrum(cfg, operator(), vectors)
        return cache[key]

    def peek():
        return cache.get("Sv", cache.get("S"))

    return {"operator": operator, "F": F, "spectrum": spec, "peek": peek, "rng": lambda name: rng_for(cfg.seed, name)}


def run(cfg: ExperimentConfig, experiment: str | None = None, out_dir=None, stream=None) -> int:
    """Run one experiment; write CSVs; return the exit status."""
    stream = sys.stdout if stream is None else stream
    name = experiment or cfg.experiment.get("name")
    if name not in RUNNERS:
        raise ConfigError(f"unknown experiment {name!r}", "experiment.name")
    if name != "report" and cfg.experiment.get("name") not in (None, name):
        raise ConfigError(f"config is for {cfg.experiment['name']!r}, not {name!r}", "experiment.name")
    out = Path(out_dir or cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    ctx = _context(cfg)
    res = RUNNERS[name](cfg, cfg.params(name), ctx)
    stem = name.replace("-", "_")
    for t in res.tables:
        write_table(t, out / f"{stem}__{t.name.replace('-', '_').replace('.', '__')}.csv", cfg, name)
    write_table(checks_table(res.checks), out / f"{stem}__checks.csv", cfg, name)
    S = ctx["peek"]()
    if cfg.spectral["export"] and S is not None:
        write_csv(S, np.ones(S.mu.size), out / f"{stem}__spectrum.csv", header=[f"config_hash={cfg.digest()}"])
    for t in res.tables:
        if t.name == "skipped":
            for n, why in t.rows:
                print(f"SKIP  {n}: {why}", file=stream)
    width = max([len(c.name) for c in res.checks] + [10])
    for c in res.checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name:<{width}}  value={c.value:.10g}  error={c.error:.3e}  tol={c.tol:.1e}", file=stream)
    failed = sum(not c.passed for c in res.checks)
    print(f"{len(res.checks) - failed}/{len(res.checks)} checks passed; tables in {out}", file=stream)
    return 1 if failed else 0


def _limit_threads():
    n = os.environ.get(THREADS_ENV)
    if not n:
        return None
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=int(n))


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="spectra-forge", description="Spectral coefficient experiments on flat tori.")
    parser.add_argument("experiment", nargs="?", help="experiment name (see --list)")
    parser.add_argument("--config", help="YAML experiment config; defaults apply when omitted")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--out", help="output directory (overrides config output)")
    parser.add_argument("--d", type=int, help="override the dimension")
    parser.add_argument("--list", action="store_true", help="print the experiment catalog")
    parser.add_argument("--dump-config", action="store_true", help="print the resolved config and exit")
    args = parser.parse_args(argv)

    if args.list:
        for name, desc in EXPERIMENTS.items():
            print(f"{name:<15} {desc}")
        return 0
    if not args.experiment:
        parser.error("an experiment name is required (see --list)")
    if args.experiment not in EXPERIMENTS:
        parser.error(f"unknown experiment {args.experiment!r} (see --list)")
    try:
        cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
        if args.seed is not None:
            cfg.seed = args.seed
        if args.d is not None:
            cfg = ExperimentConfig.from_dict({**cfg.to_dict(), "d": args.d})
            if args.experiment == "clifford-check":
                cfg.experiment["params"].setdefault("dims", [args.d])
        if args.dump_config:
            print(cfg.dump(), end="")
            return 0
        limiter = _limit_threads()
        try:
            return run(cfg, args.experiment, args.out)
        finally:
            if limiter is not None:
                limiter.restore_original_limits()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ResourceError as exc:
        print(f"resource error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
