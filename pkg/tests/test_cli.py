"""Command line interface: configs, diagnostics, exit codes and output files."""

import csv
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
import yaml
from hypothesis import given, settings
from hypothesis import strategies as st

from spectra_forge import cli
from spectra_forge.cli import ConfigError, ExperimentConfig, main, rng_for

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def _body(path: Path) -> str:
    return "".join(line for line in path.read_text().splitlines(keepends=True) if not line.startswith("#"))


def _header(path: Path) -> list[str]:
    return [line for line in path.read_text().splitlines() if line.startswith("#")]


# ---------------------------------------------------------------------------
# configs
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.yaml")), ids=lambda p: p.stem)
def test_shipped_configs_parse(path):
    cfg = ExperimentConfig.load(path)
    assert ExperimentConfig.parse(cfg.dump()) == cfg
    cli.build_operator(cfg)


term = st.fixed_dictionaries(
    {
        "k": st.lists(st.integers(-2, 2), min_size=3, max_size=3),
        "matrix": st.sampled_from(["identity", "gamma:0", "gamma:1,2", [[1, 0], [0, -1]]]),
        "coef": st.one_of(st.floats(-2, 2), st.lists(st.floats(-2, 2), min_size=2, max_size=2)),
    }
)


@settings(max_examples=40, deadline=None)
@given(
    seed=st.integers(0, 2**31),
    cutoff=st.floats(1.0, 60.0),
    psi=st.lists(term, max_size=3),
    method=st.sampled_from(["auto", "exact", "galerkin"]),
)
def test_config_round_trip(seed, cutoff, psi, method):
    raw = {"d": 3, "seed": seed, "operator": {"psi": psi}, "spectral": {"cutoff": cutoff, "method": method}}
    cfg = ExperimentConfig.from_dict(raw)
    again = ExperimentConfig.parse(cfg.dump())
    assert again == cfg
    assert again.digest() == cfg.digest()


def test_digest_changes_with_content():
    a = ExperimentConfig()
    b = ExperimentConfig.from_dict({"seed": 1})
    assert a.digest() != b.digest()
    assert a.digest() == ExperimentConfig().digest()


BAD = [
    ("d: 3\nseed: 0\nspectral:\n  cutoff: -4\n", 4, "spectral.cutoff"),
    ("d: 3\nbogus: 1\n", 2, "bogus"),
    ("d: 3\noperator:\n  psi:\n    - {k: [0, 0], matrix: identity, coef: 1}\n", 4, "operator.psi[0]"),
    ("d: 3\nspectral:\n  method: lanczos\n", 3, "spectral.method"),
    ("d: 3\nexperiment:\n  name: zeta\n  params:\n    radius: 0.5\n    nope: 2\n", 6, "experiment.params.nope"),
    ("d: 3\noperator:\n  psi:\n    - {k: [0, 0, 0], matrix: 'gamma:7', coef: 1}\n", 4, "operator.psi[0]"),
]


@pytest.mark.parametrize("text,line,path", BAD, ids=[b[2] for b in BAD])
def test_config_errors_carry_line_and_path(text, line, path):
    with pytest.raises(ConfigError) as info:
        ExperimentConfig.parse(text, source="cfg.yaml")
    assert info.value.line == line
    assert info.value.path.startswith(path)
    assert str(info.value).startswith(f"cfg.yaml:{line}: ")


def test_yaml_syntax_error_has_line():
    with pytest.raises(ConfigError) as info:
        ExperimentConfig.parse("d: 3\nspectral: [1, 2\n", source="x.yaml")
    assert info.value.line is not None


def test_params_merge_defaults():
    cfg = ExperimentConfig.from_dict({"experiment": {"name": "zeta", "params": {"radius": 0.25}}})
    p = cfg.params("zeta")
    assert p["radius"] == 0.25 and p["n_fit"] == cli.DEFAULT_PARAMS["zeta"]["n_fit"]
    # params for another experiment are not applied
    assert cfg.params("eta")["radius"] == cli.DEFAULT_PARAMS["eta"]["radius"]


# ---------------------------------------------------------------------------
# RNG streams
# ---------------------------------------------------------------------------


def test_rng_streams_are_reproducible_and_independent():
    a1 = rng_for(7, "bw-check").standard_normal(1000)
    a2 = rng_for(7, "bw-check").standard_normal(1000)
    b = rng_for(7, "sub-symbol").standard_normal(1000)
    c = rng_for(8, "bw-check").standard_normal(1000)
    np.testing.assert_array_equal(a1, a2)
    assert abs(np.corrcoef(a1, b)[0, 1]) < 0.15
    assert abs(np.corrcoef(a1, c)[0, 1]) < 0.15


def test_stream_independent_of_run_order():
    first = rng_for(3, "b").random(5)
    rng_for(3, "a").random(10**4)
    np.testing.assert_array_equal(rng_for(3, "b").random(5), first)


# ---------------------------------------------------------------------------
# exit codes and outputs
# ---------------------------------------------------------------------------


def test_list(capsys):
    assert main(["--list"]) == 0
    out = capsys.readouterr().out
    for name in cli.EXPERIMENTS:
        assert name in out


def test_unknown_experiment_exits_2():
    with pytest.raises(SystemExit) as info:
        main(["nope"])
    assert info.value.code == 2


def test_dump_config(capsys):
    assert main(["--dump-config", "zeta", "--config", str(CONFIGS / "t3_free.yaml"), "--seed", "5"]) == 0
    data = yaml.safe_load(capsys.readouterr().out)
    assert data["seed"] == 5 and data["d"] == 3


def test_clifford_check_passes(tmp_path, capsys):
    assert main(["clifford-check", "--d", "4", "--out", str(tmp_path)]) == 0
    assert "PASS" in capsys.readouterr().out
    rows = list(csv.reader(_body(tmp_path / "clifford_check__checks.csv").splitlines()))
    assert rows[0][0] == "check" and all(r[-1] == "pass" for r in rows[1:])


def test_config_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("d: 3\nspectral:\n  cutoff: zero\n")
    assert main(["zeta", "--config", str(bad), "--out", str(tmp_path)]) == 2
    err = capsys.readouterr().err
    assert f"{bad}:3: spectral.cutoff" in err


def test_resource_error_exit_code(tmp_path, capsys):
    big = tmp_path / "big.yaml"
    big.write_text("d: 3\nspectral:\n  cutoff: 400\n")
    assert main(["heat-fit", "--config", str(big), "--out", str(tmp_path)]) == 3
    assert "resource error" in capsys.readouterr().err


def test_failing_check_exit_code(tmp_path, capsys):
    cfg = tmp_path / "strict.yaml"
    cfg.write_text("d: 3\nspectral:\n  cutoff: 12\nexperiment:\n  name: heat-fit\n  params:\n    rtol: 1.0e-15\n")
    assert main(["heat-fit", "--config", str(cfg), "--out", str(tmp_path)]) == 1
    assert "FAIL" in capsys.readouterr().out


def test_non_self_adjoint_operator_rejected(tmp_path):
    cfg = tmp_path / "na.yaml"
    cfg.write_text("d: 3\noperator:\n  psi:\n    - {k: [0, 0, 0], matrix: identity, coef: [0, 1]}\n")
    assert main(["zeta", "--config", str(cfg), "--out", str(tmp_path)]) == 2


def test_csv_deterministic_and_full_precision(tmp_path):
    args = ["counting-fit", "--config", str(CONFIGS / "t3_free.yaml")]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    files = sorted((tmp_path / "a").glob("*.csv"))
    assert files
    for f in files:
        assert _body(f) == _body(tmp_path / "b" / f.name)
    head = _header(files[0])
    assert head[0].startswith("# spectra-forge ") and "experiment=counting-fit" in head[0]
    assert f"config_hash={ExperimentConfig.load(CONFIGS / 't3_free.yaml').digest()}" in head[1]
    assert head[-1].startswith("# generated=")
    rows = list(csv.reader(_body(tmp_path / "a" / "counting_fit__checks.csv").splitlines()))
    value = rows[1][1]
    assert float(value) == float(f"{float(value):.17g}")
    assert len(value.replace("-", "").replace(".", "").split("e")[0]) >= 15


def test_massless_config(tmp_path):
    assert main(["massless", "--config", str(CONFIGS / "massless_twisted.yaml"), "--out", str(tmp_path)]) == 0
    assert (tmp_path / "massless__checks.csv").exists()


def test_thread_limit_env(tmp_path, monkeypatch):
    from threadpoolctl import threadpool_info

    before = [i.get("num_threads") for i in threadpool_info()]
    monkeypatch.setenv(cli.THREADS_ENV, "1")
    assert main(["clifford-check", "--d", "2", "--out", str(tmp_path)]) == 0
    assert [i.get("num_threads") for i in threadpool_info()] == before


def test_console_script_entry(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "spectra_forge.cli", "--list"], capture_output=True, text=True)
    assert proc.returncode == 0 and "report" in proc.stdout
