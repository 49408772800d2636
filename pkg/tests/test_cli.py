import json
import math

import jsonschema
import numpy as np
import pytest

from quasimetric.cli import main
from quasimetric.report import report_schema

VALIDATOR = jsonschema.Draft202012Validator(report_schema())


def qml(capsys, *argv):
    code = main([str(a) for a in argv])
    rep = json.loads(capsys.readouterr().out)
    VALIDATOR.validate(rep)
    assert rep["exit_code"] == code
    return rep


@pytest.fixture
def write(tmp_path):
    def _write(name, content):
        p = tmp_path / name
        p.write_text(content if isinstance(content, str) else json.dumps(content))
        return p
    return _write


@pytest.fixture
def du(write):
    return write("du.json", {"kind": "grid_du", "params": {"a": 0.0, "b": 1.0, "h": 0.01}})


@pytest.fixture
def e2(write):
    return write("e.json", {"kind": "grid_euclidean", "params": {"a": 0.0, "b": 2.0, "h": 0.001}})


def test_space_summary_and_output(capsys, du, tmp_path):
    out = tmp_path / "space.json"
    rep = qml(capsys, "space", du, "--out", out)
    assert rep["exit_code"] == 0 and rep["command"] == "space"
    assert rep["results"]["n"] == 101 and rep["results"]["symmetric"] is False
    assert rep["inputs"]["recipe"]["sha256"]
    assert json.loads(out.read_text())


def test_space_triangle_violation(capsys, write):
    p = write("bad.json", {"kind": "matrix", "params": {"dist": [[0, 1, 5], [1, 0, 1], [1, 1, 0]]}})
    rep = qml(capsys, "space", p)
    assert rep["exit_code"] == 2
    err = rep["results"]["error"]
    assert err["triple"] == [0, 1, 2] and err["excess"] == 3.0


def test_wedge_space(capsys, write):
    p = write("w.json", {"kind": "wedge_union", "params": {"N": 5, "branch_step": 0.1}})
    assert qml(capsys, "space", p)["results"]["n"] == 51


def test_edges_csv_space(capsys, write):
    p = write("g.csv", "src,dst,w\n0,1,1\n1,2,1\n2,0,5\n")
    rep = qml(capsys, "space", p)
    assert rep["results"]["n"] == 3 and rep["results"]["diameter"] == 6.0  # 1 -> 2 -> 0


def test_slope_square_at_one(capsys, e2):
    rep = qml(capsys, "slope", "--space", e2, "--expr", "x**2", "--at", 1.0)
    assert rep["exit_code"] == 0
    assert abs(rep["results"]["estimate"] - 2.0) <= 0.01


def test_slope_constant_field(capsys, du, write):
    f = write("f.csv", "".join(f"{i},3.5\n" for i in range(101)))
    rep = qml(capsys, "slope", "--space", du, "--field", f, "--all")
    assert rep["results"]["sup"] == 0.0 and not any(rep["results"]["diverging"])
    assert rep["inputs"]["field"]["path"] == str(f)


def test_slope_all_warns_about_annulus(capsys, write):
    s = write("s.json", {"kind": "grid_euclidean", "params": {"a": -1.0, "b": 1.0, "h": 0.01}})
    rep = qml(capsys, "slope", "--space", s, "--expr", "where(x >= 0, 1.0, 0.0)", "--all",
              "--kink", 0.0)
    assert rep["warnings"]
    res = rep["results"]
    assert len(res["annulus"]) == 10 + 10 + 19  # both ends, then |x| < 10h around the kink
    far = [i for i in range(res["n"]) if i not in set(res["annulus"])]
    assert all(res["estimate"][i] == 0.0 for i in far)


def test_slope_sigma_and_bad_point(capsys, write):
    s = write("r.json", {"kind": "grid_rho_alpha", "params": {"a": -1, "b": 1, "h": 0.01, "alpha": 2}})
    assert qml(capsys, "slope", "--space", s, "--kind", "sigma", "--x0", 100)["results"]["estimate"] == 2.0
    assert qml(capsys, "slope", "--space", s, "--expr", "x", "--x0", 999)["exit_code"] == 2


def test_symmetry_brief(capsys, du):
    rep = qml(capsys, "symmetry", "--space", du, "--brief")
    assert rep["results"]["classification"] == "asymmetric"
    assert rep["results"]["c"] == 0.0


def test_geom_commands(capsys, write):
    s = write("e.json", {"kind": "grid_euclidean", "params": {"a": 0, "b": 1, "h": 0.1}})
    assert qml(capsys, "geom", "length", "--space", s, "--points", "0:10")["results"]["length"] == pytest.approx(1.0)
    rep = qml(capsys, "geom", "qc", "--space", s, "--r", 0.2)
    assert rep["results"]["K_estimate"] == pytest.approx(1.0)


def test_verify_length_lemma_tight(capsys, write):
    s = write("e.json", {"kind": "grid_euclidean", "params": {"a": 0, "b": 1, "h": 0.01}})
    rep = qml(capsys, "verify", "length-lemma", "--space", s, "--expr", "x", "--points", "0:100")
    assert rep["exit_code"] == 0 and 0 <= rep["results"]["margin"] <= 1e-9


def test_verify_identities(capsys, write):
    s = write("g.csv", "0,1,1\n1,2,0.5\n2,0,2\n0,2,3\n")
    for chk in ("lip-decomposition", "ordering"):
        rep = qml(capsys, "verify", chk, "--space", s, "--expr", "x**2 - x", "--x0", 1)
        assert rep["exit_code"] == 0 and rep["results"]["passed"]


def test_verify_compat(capsys, write):
    s = write("r.json", {"kind": "grid_rho_alpha", "params": {"a": -1, "b": 1, "h": 0.01, "alpha": 2}})
    args = ("verify", "compat", "--space", s, "--f-expr", "x", "--g-expr", "2*x", "--x-at", 0.0,
            "--delta", 1.5, "--rho", 0.1, "--K", 2)
    rep = qml(capsys, *args)
    assert rep["exit_code"] == 0 and rep["results"]["witness"]["z"] == 0
    c = write("c.csv", "".join(f"{i}\n" for i in range(100, 201)))
    assert qml(capsys, *args, "--candidates", c)["exit_code"] == 1


def test_corrupted_field_file(capsys, du, write):
    f = write("f.csv", "0,1\n1,oops\n")
    rep = qml(capsys, "slope", "--space", du, "--field", f, "--x0", 0)
    assert rep["exit_code"] == 2 and rep["results"]["error"]["type"] == "ValueError"


def _matrix(write, name, M):
    return write(name, "\n".join(",".join(str(v) for v in row) for row in np.asarray(M)) + "\n")


def test_bs_recover_and_verify(capsys, write):
    P = np.eye(3)[[1, 2, 0]]
    T = _matrix(write, "T.csv", P)
    assert qml(capsys, "bs", "recover", "--operator", T)["results"]["tau"] == [1, 2, 0]
    ex = write("x.json", {"kind": "grid_euclidean", "params": {"a": 0, "b": 1, "h": 0.5}})
    rep = qml(capsys, "bs", "verify", "--operator", T, "--space-x", ex, "--space-y", ex, "--seed", 1)
    assert rep["exit_code"] == 0


def test_bs_averaging_operator(capsys, write):
    A = _matrix(write, "A.csv", np.full((3, 3), 1 / 3))
    rep = qml(capsys, "bs", "recover", "--operator", A, "--force")
    assert rep["exit_code"] == 1 and rep["results"]["error"]["type"] == "NotPointInduced"
    rep = qml(capsys, "bs", "verify", "--operator", A, "--seed", 1)
    assert rep["exit_code"] == 1
    assert rep["results"]["violations"][0]["pair"] == [0, 1]


def test_bs_bound_identity(capsys, write):
    I = _matrix(write, "I.csv", np.eye(6))
    s = write("e.json", {"kind": "grid_euclidean", "params": {"a": 0, "b": 1, "h": 0.2}})
    rep = qml(capsys, "bs", "bound", "--operator", I, "--space-x", s, "--space-y", s, "--seed", 3)
    res = rep["results"]
    assert rep["exit_code"] == 0 and res["LIP_tau"] == 1.0 and res["tight"]
    assert math.isclose(res["LIP_tau"], res["C"] * res["norm_T"], abs_tol=1e-9)


def test_report_flag(capsys, du, tmp_path):
    out = tmp_path / "r.json"
    assert main(["space", str(du), "--report", str(out)]) == 0
    assert capsys.readouterr().out == ""
    VALIDATOR.validate(json.loads(out.read_text()))


def test_corpus_list_and_filters(capsys):
    names = [c["name"] for c in qml(capsys, "corpus", "run", "--seed", 7, "--list")["results"]["cases"]]
    assert {f"A{i:02d}" for i in range(1, 13)} <= {n[:3] for n in names}
    assert qml(capsys, "corpus", "run", "--seed", 7, "--filter", "nothing_matches")["exit_code"] == 2
    code = main(["corpus", "run", "--seed", "7", "--filter", "A03", "--h", "0.2"])
    out, err = capsys.readouterr()
    rep = json.loads(out)
    VALIDATOR.validate(rep)
    assert code == rep["exit_code"] == 1 and rep["results"]["failed"] == ["A03_convergence"]
    assert err.startswith("FAIL  A03_convergence")


def test_missing_required_seed():
    with pytest.raises(SystemExit):
        main(["corpus", "run"])
