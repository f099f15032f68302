import csv
import json
import re

import pytest

from lipqgh.cli import main

C2 = {
    "name": "C2",
    "system": {"blocks": [1, 1]},
    "seminorm": {"kind": "linmap", "matrix": [[0.5, -0.5]], "p": "inf"},
    "leibniz": 1.0,
    "tasks": [{"task": "rho", "states": [{"block": 0, "vector": [1]}, {"block": 1, "vector": [1]}]}],
}


@pytest.fixture
def cfg(tmp_path):
    p = tmp_path / "c2.json"
    p.write_text(json.dumps(C2))
    return p


def _rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_radius_on_c2_is_one(cfg, tmp_path):
    assert main(["radius", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    row = _rows(tmp_path / "o" / "radius.csv")[0]
    assert float(row["radius_upper"]) == pytest.approx(1) and row["status"] == "converged"


def test_rho_from_config_states(cfg, tmp_path):
    assert main(["rho", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    row = _rows(tmp_path / "rho.csv")[0]
    assert float(row["rho_upper"]) == pytest.approx(2)


def test_epsilon_curve_grid_flag(cfg, tmp_path):
    assert main(["epsilon-curve", "--config", str(cfg), "--grid", "0.5:1.5:3", "--out", str(tmp_path)]) == 0
    rows = _rows(tmp_path / "epsilon_curve.csv")
    assert [float(r["r"]) for r in rows] == [0.5, 1.0, 1.5]
    assert float(rows[-1]["eps_upper"]) == 0.0


def test_triangle_dist_bound_column(tmp_path):
    assert main(["example", "flattening-triangle", "--n", "1,2,4,8", "dist-bound", "--out", str(tmp_path)]) == 0
    rows = _rows(tmp_path / "flattening-triangle_summary.csv")
    assert [float(r["dist_bound"]) for r in rows] == pytest.approx([1, 0.5, 0.25, 0.125], abs=1e-9)
    assert all(r["status"] for r in rows)


def test_two_by_two_limit_not_inherited(tmp_path):
    assert main(["example", "two-by-two", "--n", "4", "limit-system", "--out", str(tmp_path)]) == 0
    rec = json.loads((tmp_path / "two-by-two_limit_system.json").read_text())
    assert rec["inherited"] is False and rec["consistent"] is True and rec["limit_dim"] == 3


def test_shape_from_example(tmp_path):
    assert main(["shape", "--example", "two-by-two", "--out", str(tmp_path)]) == 0
    rec = json.loads((tmp_path / "shape.json").read_text())
    assert rec["shape"] == "disc" and rec["radius"] == pytest.approx(0.5)


def test_env_var_sets_output_dir(cfg, tmp_path, monkeypatch):
    monkeypatch.setenv("LIPQGH_OUT", str(tmp_path / "env"))
    assert main(["radius", "--config", str(cfg)]) == 0
    assert (tmp_path / "env" / "radius.csv").exists()


def test_floats_have_seventeen_digits(tmp_path):
    assert main(["dist-bound", "--example", "two-by-two", "--n", "2", "--out", str(tmp_path)]) == 0
    text = (tmp_path / "dist_bound.csv").read_text().splitlines()[1]
    lower = text.split(",")[2]
    assert len(lower.replace(".", "").lstrip("0")) >= 15


@pytest.mark.parametrize("mutate,where", [
    (lambda d: d.pop("seminorm"), "config: missing key 'seminorm'"),
    (lambda d: d["seminorm"].update(matrix=[[1, 2, 3]]), "seminorm"),
    (lambda d: d["seminorm"].update(kind="bogus"), "seminorm: unknown kind"),
    (lambda d: d["system"].update(basis=[[1]]), r"system.basis\[0\]"),
    (lambda d: d.update(tasks=[{"task": "fly"}]), r"tasks\[0\].task"),
    (lambda d: d.update(solver={"nope": 1}), "solver: unknown keys"),
])
def test_schema_errors_exit_nonzero_with_path(tmp_path, capsys, mutate, where):
    d = json.loads(json.dumps(C2))
    mutate(d)
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(d))
    assert main(["radius", "--config", str(p), "--out", str(tmp_path)]) == 2
    err = capsys.readouterr().err
    assert err.startswith("error: ")
    assert re.search(where, err)


def test_bad_flags(tmp_path, capsys):
    assert main(["epsilon-curve", "--example", "two-by-two", "--grid", "oops", "--out", str(tmp_path)]) == 2
    assert "--grid" in capsys.readouterr().err
    assert main(["limit-system", "--out", str(tmp_path)]) == 2
    assert main(["example", "nonexistent", "--out", str(tmp_path)]) == 2
    with pytest.raises(SystemExit):
        main(["frobnicate"])


def test_invalid_json_reports_location(tmp_path, capsys):
    p = tmp_path / "x.json"
    p.write_text("{ not json")
    assert main(["radius", "--config", str(p), "--out", str(tmp_path)]) == 2
    assert "config: invalid JSON at line 1" in capsys.readouterr().err
