import csv
import io
import subprocess
import sys

import pytest
import yaml

from hetq.cli import main
from hetq.experiments import run_static_vs_dynamic, sim_config_from_spec
from hetq.model import SystemParams
from hetq.pareto import frontier_blocking_at, load_bounds
from hetq.sim import limit_values
from hetq.subpolicy import cd_blocking

PARAMS = {"lambda_tau": 4, "mu_tau": 8, "rho_eps": 0.4}
CATALOG = [{"kind": "cd", "p": 1.0, "K": 5}, {"kind": "cd", "p": 0.0, "K": 5}]
SIM = {
    "params": {**PARAMS, "mu_eps": 5},
    "policy": {"prefix": [CATALOG[0]] * 2, "tail": CATALOG[1]},
    "horizon": {"events": 20000},
    "replications": 2,
    "base_seed": 4,
}

SPECS = {
    "analyze": {"schema": 1, "params": PARAMS, "policy": {"prefix": [CATALOG[0]] * 3, "tail": CATALOG[1]}},
    "frontier": {"schema": 1, "kind": "frontier", "params": PARAMS, "catalog": CATALOG,
                 "C_grid": {"start": 1.0, "stop": 4.5, "num": 15}},
    "simulate": {"schema": 1, **SIM},
    "scatter": {"schema": 1, "kind": "scatter", "params": PARAMS, "catalog": CATALOG, "K": 5,
                "samples": 300, "L_max": 15, "seed": 3},
    "convergence": {"schema": 1, "kind": "convergence", "sim": SIM, "mu_eps": [1, 5],
                    "thresholds": {"L": [1, 3], "below": CATALOG[0], "above": CATALOG[1]}},
    "static_vs_dynamic": {"schema": 1, "kind": "static_vs_dynamic", "sim": SIM, "K": 5,
                          "static_p": [0.5, 1.0], "dynamic_L": [1, 3]},
}

COMMANDS = {
    "analyze": "analyze",
    "frontier": "frontier",
    "simulate": "simulate",
    "scatter": "sweep",
    "convergence": "sweep",
    "static_vs_dynamic": "sweep",
}


def _write(tmp_path, name, spec):
    path = tmp_path / f"{name}.yaml"
    path.write_text(yaml.safe_dump(spec))
    return path


def _run(tmp_path, name, extra=()):
    spec = _write(tmp_path, name, SPECS[name])
    out = tmp_path / f"{name}.csv"
    assert main([COMMANDS[name], str(spec), "--out", str(out), *extra]) == 0
    return out.read_bytes()


def _rows(data: bytes):
    lines = data.decode().splitlines()
    return list(csv.DictReader(io.StringIO("\n".join(lines[1:]))))


@pytest.mark.parametrize("name", sorted(SPECS))
def test_commands_are_byte_reproducible(tmp_path, name):
    a = _run(tmp_path, name)
    b = _run(tmp_path, name)
    assert a == b
    first = a.decode().split("\r\n", 1)[0]
    assert first.startswith("# config_sha256=") and " seed=" in first


def test_seed_flag_changes_output(tmp_path):
    a = _run(tmp_path, "scatter")
    b = _run(tmp_path, "scatter", ["--seed", "99"])
    assert a != b
    assert b.decode().split("\r\n", 1)[0].endswith("seed=99")


def test_frontier_csv(tmp_path):
    rows = _rows(_run(tmp_path, "frontier"))
    assert list(rows[0]) == ["C", "L", "d", "expected_n", "blocking"]
    blocking = [float(r["blocking"]) for r in rows]
    assert all(a >= b for a, b in zip(blocking, blocking[1:]))
    assert rows[-1]["L"] == "inf"
    assert float(rows[-1]["blocking"]) == pytest.approx(cd_blocking(1, 5, 0.4))


def test_scatter_inside_region_and_dominated(tmp_path):
    rows = _rows(_run(tmp_path, "scatter"))
    params = SystemParams(4, 8, 0.4)
    d_min, d_max = cd_blocking(1, 5, 0.4), 1.0
    b = load_bounds(d_min, d_max, params)
    for r in rows:
        e, pb = float(r["expected_n"]), float(r["blocking"])
        assert d_min - 1e-12 <= pb <= d_max + 1e-12
        assert frontier_blocking_at(e, b, d_min, d_max, params) <= pb + 1e-12


def test_convergence_columns(tmp_path):
    rows = _rows(_run(tmp_path, "convergence"))
    for r in rows:
        assert float(r["lambda_eps"]) == 0.4 * float(r["mu_eps"])
    by_L = {}
    for r in rows:
        by_L.setdefault(r["L"], set()).add((r["limit_blocking"], r["limit_expected_n"]))
    assert all(len(v) == 1 for v in by_L.values())


def test_static_equals_constant_dynamic_in_limit():
    spec = dict(SPECS["static_vs_dynamic"], static_p=[1.0], dynamic_L=[1])
    table = run_static_vs_dynamic(spec)
    # CD-(1,5) everywhere is the dynamic threshold policy with both levels equal
    cfg = sim_config_from_spec({"sim": {**SIM, "policy": {"prefix": [CATALOG[0]], "tail": CATALOG[0]}}})
    en, pb = limit_values(cfg)
    static = table.rows[0]
    assert static[2] == pytest.approx(en, rel=1e-13) and static[3] == pytest.approx(pb, rel=1e-13)


def test_dynamic_dominates_static_in_limit():
    spec = dict(SPECS["static_vs_dynamic"], static_p=[0.2, 0.5, 0.8, 1.0], dynamic_L=[1])
    table = run_static_vs_dynamic(spec)
    params = SystemParams(4, 8, 0.4)
    d_min = cd_blocking(1, 5, 0.4)
    b = load_bounds(d_min, 1.0, params)
    for row in table.rows:
        if row[0] == "static":
            assert frontier_blocking_at(row[2], b, d_min, 1.0, params) <= row[3] + 1e-12


def test_bad_schema_is_reported(tmp_path, capsys):
    path = _write(tmp_path, "bad", {"kind": "frontier", "params": PARAMS})
    assert main(["frontier", str(path)]) == 2
    assert "schema" in capsys.readouterr().err
    path = _write(tmp_path, "bad2", {"schema": 1, "kind": "nope"})
    assert main(["sweep", str(path)]) == 2
    assert main(["analyze", str(tmp_path / "missing.yaml")]) == 2


def test_console_script_stdout(tmp_path):
    spec = _write(tmp_path, "analyze", SPECS["analyze"])
    out = subprocess.run(
        [sys.executable, "-m", "hetq.cli", "analyze", str(spec)], capture_output=True, check=True
    ).stdout
    assert out.startswith(b"# config_sha256=")
    assert b"expected_n,-1,1.524962715716213" in out
