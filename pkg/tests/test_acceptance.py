"""One test per acceptance criterion, each reporting a PASS/FAIL line.

The numeric checks live in the corpus cases so the CLI and this suite share one
implementation; the assertions below restate the stated tolerances against the
recorded details so a drifting corpus case cannot pass silently.
"""

import subprocess
import sys
import time

import pytest

from conftest import ACCEPTANCE_LINES
from quasimetric import corpus

CTX = corpus.Context(seed=7)


def record(label, ok, seconds, limit=None, note=""):
    budget = "" if limit is None else f" (limit {limit:g}s)"
    line = f"{label:<4} {'PASS' if ok else 'FAIL'}  {seconds:6.2f}s{budget}  {note}".rstrip()
    ACCEPTANCE_LINES.append(line)
    print(line)


def run_case(name):
    t = time.perf_counter()
    passed, detail = corpus.CASES_BY_NAME[name].run(CTX)
    return passed, detail, time.perf_counter() - t


def check(label, name, limit, verify):
    passed, detail, dt = run_case(name)
    problems = []
    try:
        verify(detail)
    except (AssertionError, KeyError) as exc:
        problems.append(f"detail check: {exc!r}")
    if not passed:
        problems.append("corpus case reported failure")
    if dt >= limit:
        problems.append(f"runtime {dt:.2f}s over {limit}s")
    record(label, not problems, dt, limit, "; ".join(problems))
    assert not problems, (problems, detail)


def test_a01_index_closed_forms():
    def v(d):
        assert d["discrete"] == 1.0 and d["euclidean"] == 1.0 and d["du"] == 0.0
        for a, c in d["rho_alpha"].items():
            a = float(a)
            assert abs(c - min(a, 1 / a)) <= 1e-9
        cs = [r["c"] for r in d["randers"]]
        assert all(x > y for x, y in zip(cs, cs[1:]))
        assert all(r["c"] <= r["bound"] + 1e-9 for r in d["randers"])
    check("A01", "A01_index_closed_forms", 1.0, v)


def test_a02_slope_examples():
    def v(d):
        assert d["tail_ascent"] == 0.0 and d["tail_descent_diverging"]
        assert 0.99 <= d["kink_descent"] <= 1.01 and 1.99 <= d["kink_ascent"] <= 2.01
        assert d["step_slip_max_outside_10h"] == 0.0 and d["step_lip_diverging_at_0"]
    check("A02", "A02_slope_examples", 2.0, v)


def test_a03_convergence():
    def v(d):
        assert d["h"] == 1e-3
        for k, err in d["max_error"].items():
            assert err <= 0.02 and d["max_error_fine"][k] < err
    check("A03", "A03_convergence", 5.0, v)


def test_a04_rung_identities():
    def v(d):
        assert d["checks"] == 50 * 20 * 2 * 2 and d["failures"] == 0
    check("A04", "A04_rung_identities", 2.0, v)


def test_a05_length_lemma():
    def v(d):
        assert d["triples"] == 100 and d["min_margin"] >= -1e-9
        assert 0 <= d["identity_margin"] <= 1e-9
    check("A05", "A05_length_lemma", 2.0, v)


def test_a06_upper_gradient():
    def v(d):
        assert d["triples"] == 100 and d["min_margin"] >= -1e-9
        assert d["relative_gap"] <= 0.02
    check("A06", "A06_upper_gradient", 2.0, v)


def test_a07_quasiconvexity():
    def v(d):
        assert abs(d["euclidean_K"] - 1) <= 1e-9
        assert [r["h"] for r in d["snowflake"]] == [1e-2, 2.5e-3, 6.25e-4]
        assert all(g >= 1.3 for g in d["growth_per_halving"])
        assert all(r["diverging"] for r in d["snowflake"])
    check("A07", "A07_quasiconvexity", 5.0, v)


def test_a08_symmetry_taxonomy():
    def v(d):
        assert d["wedge"] == "pointwise_quasi_symmetric"
        assert abs(d["sigma_origin"] - 1) <= 1e-9 and d["sigma_ball_sup_near_origin"] == 5
        assert d["interval_union"] == "uniformly_quasi_symmetric"
        assert d["interval_K_sup"] == 1.0 and d["interval_c"] == 1 / 5
    check("A08", "A08_symmetry_taxonomy", 1.0, v)


def test_a09_compatibility():
    def v(d):
        assert d["witness"]["z"] < d["witness"]["x"] and d["reverified"] == [True, True]
        assert d["without_lower_points"]["searched"] > 0
    check("A09", "A09_compatibility", 1.0, v)


def test_a10_round_trip():
    def v(d):
        assert d["exhaustive"] == 1 + 2 + 6 + 24 + 120 and d["random"] == 200
        assert d["max_deviation"] <= 1e-9 and d["averaging_not_point_induced"]
        assert d["multiplicative_witness"]["check"] == "multiplicative"
    check("A10", "A10_round_trip", 5.0, v)


def test_a11_lipschitz_bound():
    def v(d):
        dbl, iso = d["doubling"], d["isometry"]
        assert dbl["passed"] and dbl["LIP_tau"] <= dbl["C"] * dbl["norm_T"] + 1e-12
        assert iso["passed"] and abs(iso["LIP_tau"] - iso["C"] * iso["norm_T"]) <= 1e-9
    check("A11", "A11_lipschitz_bound", 1.0, v)


def test_a12_corpus_command():
    cmd = [sys.executable, "-m", "quasimetric.cli", "corpus", "run", "--seed", "7"]
    t = time.perf_counter()
    procs = [subprocess.Popen(cmd, stdout=subprocess.PIPE, stderr=subprocess.PIPE) for _ in range(2)]
    outs = [p.communicate() for p in procs]
    dt = time.perf_counter() - t
    problems = []
    codes = [p.returncode for p in procs]
    if codes != [0, 0]:
        problems.append(f"exit codes {codes}")
    if outs[0][0] != outs[1][0]:
        problems.append("stdout differs between runs")
    table = outs[0][1].decode()
    missing = [f"A{i:02d}" for i in range(1, 13) if not any(
        ln.startswith("PASS") and f" A{i:02d}_" in ln for ln in table.splitlines())]
    if missing:
        problems.append(f"no passing row for {missing}")
    record("A12", not problems, dt, None, "; ".join(problems) or "two runs, byte-identical")
    assert not problems, table


@pytest.mark.parametrize("h", [0.2])
def test_a03_fails_at_coarse_resolution(h):
    # the convergence check must be able to fail
    passed, detail = corpus.CASES_BY_NAME["A03_convergence"].run(corpus.Context(seed=7, h=h))
    assert not passed and max(detail["max_error"].values()) > 0.02
