"""Named regression cases: the closed-form examples and the acceptance criteria.

Each case is a function ``(ctx) -> (passed, detail)``. Results are
deterministic for a given seed and contain no timings, so two runs serialise
to identical bytes.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from .banach_stone import (
    FunctionAlgebra,
    averaging_operator,
    compose_operator,
    lipschitz_bound_check,
    recover_tau,
    verify_composition,
    verify_iso,
)
from .descent import NoWitness, check_metric_compatibility, evaluate_pair
from .errors import NotPointInduced
from .geometry import curve_on, quasiconvexity_constant, verify_length_lemma, verify_upper_gradient
from .qspace import (
    QuasiMetricSpace,
    SpaceRecipe,
    build_space,
    forward_ball,
    from_matrix,
    grid,
    path_quasimetric,
    symmetrize,
    wedge_index,
)
from .report import dumps
from .slope import (
    LadderConfig,
    ScalarField,
    ascent_slope_at,
    bind,
    descent_slope_at,
    from_function,
    lip_at,
    lip_batch,
    slip_at,
    slip_batch,
    slip_sup,
    verify_constant_ordering,
    verify_lip_decomposition,
)
from .symmetry import classify_symmetry, index_of_symmetry, pointwise_sigma


@dataclass(frozen=True)
class Context:
    seed: int = 7
    h: float | None = None  # overrides the resolution of the convergence cases


@dataclass(frozen=True)
class Case:
    name: str
    description: str
    run: Callable[[Context], tuple[bool, dict]]


@lru_cache(maxsize=32)
def _grid(kind: str, a: float, b: float, h: float, alpha: float | None = None) -> QuasiMetricSpace:
    extra = {} if alpha is None else {"alpha": alpha}
    return grid(kind, a, b, h, **extra)


def _index(space: QuasiMetricSpace, x: float) -> int:
    return int(np.argmin(np.abs(space.coords - x)))


def _near(a: float, b: float, tol: float) -> bool:
    return abs(a - b) <= tol


def _kink(x):
    return np.where(x <= 0, -2 * x, -x)


def _tail(x):
    return np.where(x <= 0, 0.0, -np.sqrt(np.maximum(x, 0.0)))


def _step(x):
    return (x >= 0).astype(float)


# --------------------------------------------------------------------------- closed-form examples


def p_distances(ctx):
    du = _grid("grid_du", 0.0, 1.0, 1.0)
    rd = _grid("grid_randers", 0.0, 1.0, 1.0)
    w = build_space(SpaceRecipe("wedge_union", {"N": 3, "branch_step": 0.5, "branch_length": 1.0}))
    p = wedge_index(3, 1, 2)
    got = {
        "du_01": du.d(0, 1), "du_10": du.d(1, 0),
        "randers_01": rd.d(0, 1), "randers_10": rd.d(1, 0),
        "wedge_p0": w.d(p, 0), "wedge_0p": w.d(0, p),
    }
    want = {"du_01": 1.0, "du_10": 0.0, "randers_01": math.pi / 4, "randers_10": 2 - math.pi / 4,
            "wedge_p0": 0.5, "wedge_0p": 1.5}
    ok = all(_near(got[k], want[k], 1e-12) for k in want)
    return ok, {"got": got, "want": want}


def p_symmetrizations(ctx):
    du = _grid("grid_du", 0.0, 1.0, 1.0)
    mx, av = symmetrize(du, "max"), symmetrize(du, "avg")
    got = [mx.d(0, 1), mx.d(1, 0), av.d(0, 1), av.d(1, 0)]
    return got == [1.0, 1.0, 0.5, 0.5], {"max": got[:2], "avg": got[2:]}


def p_step_semi_lipschitz(ctx):
    s = _grid("grid_euclidean", -1.0, 1.0, 1e-3)
    f = from_function(s, _step)
    e = slip_at(s, f, _index(s, -0.5))
    lip = lip_at(s, f, _index(s, 0.0))
    ok = e.estimate == 0.0 and not e.diverging and lip.diverging
    return ok, {"slip_at_-0.5": e.estimate, "slip_diverging": e.diverging, "lip_at_0_diverging": lip.diverging,
                "lip_ladder": [g.s for g in lip.ladder]}


def _convergence_h(ctx, default):
    return ctx.h if ctx.h is not None else default


def p_square_at_one(ctx):
    h = _convergence_h(ctx, 1e-3)
    s = _grid("grid_euclidean", 0.0, 2.0, h)
    f = from_function(s, lambda x: x**2)
    i = _index(s, 1.0)
    a, b = slip_at(s, f, i).estimate, lip_at(s, f, i).estimate
    return _near(a, 2, 0.01) and _near(b, 2, 0.01), {"h": h, "slip": a, "lip": b}


def p_kink_slopes(ctx):
    s = _grid("grid_euclidean", -1.0, 1.0, 1e-3)
    g = from_function(s, _kink)
    i = _index(s, 0.0)
    out = {"slip": slip_at(s, g, i).estimate, "ascent": ascent_slope_at(s, g, i).estimate,
           "descent": descent_slope_at(s, g, i).estimate, "lip": lip_at(s, g, i).estimate}
    ok = (_near(out["slip"], 2, 0.01) and _near(out["ascent"], 2, 0.01)
          and _near(out["descent"], 1, 0.01) and _near(out["lip"], 2, 0.01))
    dec = verify_lip_decomposition(s, g, i)
    out["decomposition_passed"] = dec.passed
    return ok and dec.passed, out


def p_snowflake_bumps(ctx):
    """Negative tent bumps on the snowflake line: SLip vanishes while Lip at 0 sees k."""
    h = 4e-6
    s = _grid("grid_snowflake", 0.0, 1.0, h)
    k = 1.0
    x = s.coords
    f = np.zeros_like(x)
    for a, hw in ((0.3, 0.1), (0.6, 0.1), (0.9, 0.08)):
        f += np.minimum(0.0, -k * math.sqrt(a) * (1 - np.abs(x - a) / hw))
    fld = bind(s, f)
    cfg = LadderConfig(r0=3.5 * math.sqrt(h))
    sup = slip_sup(s, fld, cfg)
    wide = lip_at(s, fld, 0, LadderConfig(r0=1.0, n_rungs=1))
    ok = sup <= 0.05 and _near(wide.ladder[0].s, k, 1e-9)
    return ok, {"slip_sup": sup, "lip_ratio_at_0": wide.ladder[0].s, "k": k}


def p_index_examples(ctx):
    got = {
        "euclidean": index_of_symmetry(_grid("grid_euclidean", 0.0, 1.0, 0.1)),
        "du": index_of_symmetry(_grid("grid_du", 0.0, 1.0, 0.1)),
        "rho_2": index_of_symmetry(_grid("grid_rho_alpha", 0.0, 1.0, 0.1, 2.0)),
    }
    ok = got["euclidean"] == 1.0 and got["du"] == 0.0 and _near(got["rho_2"], 0.5, 1e-9)
    return ok, got


def p_sigma_examples(ctx):
    w = build_space(SpaceRecipe("wedge_union", {"N": 5, "branch_step": 0.05}))
    r = _grid("grid_rho_alpha", -1.0, 1.0, 0.01, 2.0)
    got = {"wedge_origin": pointwise_sigma(w, 0).estimate,
           "rho_2_interior": pointwise_sigma(r, _index(r, 0.0)).estimate}
    ok = _near(got["wedge_origin"], 1, 1e-9) and _near(got["rho_2_interior"], 2, 1e-9)
    return ok, got


# --------------------------------------------------------------------------- acceptance criteria


def a01_index(ctx):
    detail = {}
    discrete = from_matrix(np.ones((3, 3)) - np.eye(3))
    detail["discrete"] = index_of_symmetry(discrete)
    detail["euclidean"] = index_of_symmetry(_grid("grid_euclidean", 0.0, 1.0, 0.05))
    detail["du"] = index_of_symmetry(_grid("grid_du", 0.0, 1.0, 0.05))
    ok = detail["discrete"] == 1.0 and detail["euclidean"] == 1.0 and detail["du"] == 0.0
    rho = {}
    for a in (0.5, 2.0, 3.0):
        c = index_of_symmetry(_grid("grid_rho_alpha", -1.0, 1.0, 0.05, a))
        rho[str(a)] = c
        ok &= _near(c, min(a, 1 / a), 1e-9)
    detail["rho_alpha"] = rho
    randers = []
    for X in (2, 5, 10, 20):
        c = index_of_symmetry(_grid("grid_randers", 0.0, float(X), 0.05))
        bound = (math.atan(X) - math.atan(X - 1)) / (2 + math.atan(X - 1) - math.atan(X))
        randers.append({"X": X, "c": c, "bound": bound})
        ok &= c <= bound + 1e-9
    ok &= all(randers[i]["c"] > randers[i + 1]["c"] for i in range(len(randers) - 1))
    detail["randers"] = randers
    return bool(ok), detail


def a02_slopes(ctx):
    h = 1e-5
    s = _grid("grid_euclidean", -1.0, 1.0, h)
    i0 = _index(s, 0.0)
    tail = from_function(s, _tail)
    kink = from_function(s, _kink)
    step = from_function(s, _step)
    asc_t = ascent_slope_at(s, tail, i0)
    des_t = descent_slope_at(s, tail, i0)
    asc_g = ascent_slope_at(s, kink, i0).estimate
    des_g = descent_slope_at(s, kink, i0).estimate
    cfg = LadderConfig(r0=16 * h)
    batch = slip_batch(s, step, cfg)
    far = np.abs(s.coords) >= 10 * h * (1 - 1e-9)
    step_far = float(batch.estimate[far].max())
    lip0 = lip_at(s, step, i0)
    ok = (asc_t.estimate == 0.0 and des_t.diverging and 0.99 <= des_g <= 1.01 and 1.99 <= asc_g <= 2.01
          and step_far == 0.0 and not batch.diverging[far].any() and lip0.diverging)
    return ok, {"tail_ascent": asc_t.estimate, "tail_descent_diverging": des_t.diverging,
                "kink_descent": des_g, "kink_ascent": asc_g, "step_slip_max_outside_10h": step_far,
                "step_points_checked": int(far.sum()), "step_r0": cfg.r0, "step_lip_diverging_at_0": lip0.diverging}


def _convergence_error(h: float) -> dict:
    s = _grid("grid_euclidean", 0.0, 2.0, h)
    cfg = LadderConfig(r0=50 * h)
    inner = np.ones(s.n, dtype=bool)
    inner[[0, -1]] = False  # endpoints see only one side
    out = {}
    for name, fn, df in (("x^2", lambda x: x**2, lambda x: 2 * x),
                         ("sin", np.sin, np.cos),
                         ("exp", np.exp, np.exp)):
        f = from_function(s, fn, df)
        est = slip_batch(s, f, cfg).estimate
        out[name] = float(np.max(np.abs(est - np.abs(df(s.coords)))[inner]))
    return out


def a03_convergence(ctx):
    coarse_h = _convergence_h(ctx, 1e-3)
    fine_h = coarse_h / 10
    coarse = _convergence_error(coarse_h)
    fine = _convergence_error(fine_h)
    ok = all(coarse[k] <= 0.02 and fine[k] < coarse[k] for k in coarse)
    return ok, {"h": coarse_h, "max_error": coarse, "h_fine": fine_h, "max_error_fine": fine}


def random_metric(rng: np.random.Generator, n: int = 20) -> QuasiMetricSpace:
    P = rng.random((n, 2))
    D = np.sqrt(((P[:, None, :] - P[None, :, :]) ** 2).sum(-1))
    return from_matrix(D, "random_metric")


def random_quasimetric(rng: np.random.Generator, n: int = 20, p: float = 0.5) -> QuasiMetricSpace:
    edges = [(i, (i + 1) % n, rng.uniform(0.1, 1.0)) for i in range(n)]
    for i, j in itertools.permutations(range(n), 2):
        if rng.random() < p:
            edges.append((i, j, rng.uniform(0.1, 2.0)))
    return path_quasimetric(edges, n, "random_quasimetric")


def a04_rung_identities(ctx):
    rng = np.random.default_rng(ctx.seed)
    spaces = [random_metric(rng), random_quasimetric(rng)]
    checks = fails = 0
    worst = None
    for _ in range(50):
        for s in spaces:
            f = bind(s, rng.normal(size=s.n))
            for x0 in range(s.n):
                for rep in (verify_lip_decomposition(s, f, x0), verify_constant_ordering(s, f, x0)):
                    checks += 1
                    if not rep.passed:
                        fails += 1
                        worst = worst or {"space": s.label, "x0": x0, "gap": rep.worst_gap}
    return fails == 0, {"checks": checks, "failures": fails, "first_failure": worst}


def random_triples(seed: int, count: int = 100):
    """Random (space, field, curve) with every step shorter than a quarter diameter both ways."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        n = int(rng.integers(6, 16))
        s = random_quasimetric(rng, n, 0.6) if rng.random() < 0.6 else random_metric(rng, n)
        D = s.dist
        lim = s.diameter() / 4
        ok = (np.maximum(D, D.T) < lim) & ~np.eye(n, dtype=bool)
        start = int(rng.integers(n))
        pts = [start]
        for _ in range(int(rng.integers(1, 12))):
            nbrs = np.flatnonzero(ok[pts[-1]])
            if nbrs.size == 0:
                break
            pts.append(int(rng.choice(nbrs)))
        f = bind(s, rng.normal(size=n))
        out.append((s, f, curve_on(s, pts)))
    return out


def a05_length_lemma(ctx):
    margins = [verify_length_lemma(s, f, c).margin for s, f, c in random_triples(ctx.seed)]
    e = _grid("grid_euclidean", 0.0, 1.0, 0.01)
    tight = verify_length_lemma(e, from_function(e, lambda x: x), curve_on(e, range(e.n)))
    ok = min(margins) >= -1e-9 and 0 <= tight.margin <= 1e-9
    return ok, {"triples": len(margins), "min_margin": min(margins), "identity_margin": tight.margin,
                "identity_lhs": tight.lhs, "identity_rhs": tight.rhs}


def a06_upper_gradient(ctx):
    margins = [verify_upper_gradient(s, f, c).margin for s, f, c in random_triples(ctx.seed)]
    e = _grid("grid_euclidean", 0.0, 1.0, 0.01)
    rep = verify_upper_gradient(e, from_function(e, lambda x: x**2), curve_on(e, range(e.n)))
    riemann = float(np.sum(2 * e.coords[1:]) * 0.01)
    rel = abs(rep.rhs - riemann) / riemann
    ok = min(margins) >= -1e-9 and rep.passed and rel <= 0.02
    return ok, {"triples": len(margins), "min_margin": min(margins), "square_rhs": rep.rhs,
                "riemann_sum": riemann, "relative_gap": rel}


def a07_quasiconvexity(ctx):
    h = 0.01
    e = _grid("grid_euclidean", 0.0, 1.0, h)
    ke = quasiconvexity_constant(e, 2 * h)
    rows = []
    for hs in (1e-2, 2.5e-3, 6.25e-4):
        s = _grid("grid_snowflake", 0.0, 1.0, hs)
        rep = quasiconvexity_constant(s, 2 * math.sqrt(hs))
        rows.append({"h": hs, "K": rep.K_estimate, "diverging": rep.diverging,
                     "scales": [{"r": r, "K": k} for r, k in rep.scales]})
    growth = [rows[i + 1]["K"] / rows[i]["K"] for i in range(len(rows) - 1)]
    ok = (_near(ke.K_estimate, 1, 1e-9) and not ke.diverging and all(g >= 1.3 for g in growth)
          and all(r["diverging"] for r in rows))
    return ok, {"euclidean_K": ke.K_estimate, "snowflake": rows, "growth_per_halving": growth}


def a08_taxonomy(ctx):
    N = 5
    step = 0.02
    w = build_space(SpaceRecipe("wedge_union", {"N": N, "branch_step": step}))
    wr = classify_symmetry(w)
    sig0 = wr.sigma[0].estimate
    est = np.array([s.estimate for s in wr.sigma])
    ball = forward_ball(w, 0, (N + 1) * step)
    ball_sup = float(est[ball].max())
    iu = build_space(SpaceRecipe("interval_union", {"N": N, "points_per_interval": 21}))
    ir = classify_symmetry(iu)
    ok = (wr.classification == "pointwise_quasi_symmetric" and _near(sig0, 1, 1e-9) and ball_sup == N
          and ir.classification == "uniformly_quasi_symmetric" and ir.K_sup == 1.0 and ir.c == 1 / N)
    return ok, {"wedge": wr.classification, "sigma_origin": sig0, "sigma_ball_sup_near_origin": ball_sup,
                "interval_union": ir.classification, "interval_K_sup": ir.K_sup, "interval_c": ir.c}


def a09_compatibility(ctx):
    s = _grid("grid_rho_alpha", -1.0, 1.0, 0.01, 2.0)
    f = from_function(s, lambda x: x)
    g = from_function(s, lambda x: 2 * x)
    x = _index(s, 0.0)
    w = check_metric_compatibility(s, f, g, x, 1.5, 0.1, 2.0)
    redo = evaluate_pair(s, f, g, w.x, w.z, 1.5, 0.1, 2.0) if not isinstance(w, NoWitness) else None
    nw = check_metric_compatibility(s, f, g, x, 1.5, 0.1, 2.0, candidates=np.arange(x, s.n))
    ok = (not isinstance(w, NoWitness) and w.ok and redo is not None and redo.ok and redo == w
          and isinstance(nw, NoWitness))
    return ok, {"witness": w.to_json(), "reverified": None if redo is None else list(redo.satisfied),
                "without_lower_points": nw.to_json()}


def a10_round_trip(ctx):
    rng = np.random.default_rng(ctx.seed)
    exhaustive = 0
    for n in range(1, 6):
        for perm in itertools.permutations(range(n)):
            T = compose_operator(perm, n)
            if not np.array_equal(recover_tau(T), perm):
                return False, {"failed_permutation": list(perm)}
            exhaustive += 1
    worst = 0.0
    for _ in range(200):
        perm = rng.permutation(12)
        T = compose_operator(perm, 12)
        tau = recover_tau(T)
        if not np.array_equal(tau, perm):
            return False, {"failed_permutation": perm.tolist()}
        worst = max(worst, verify_composition(T, tau, rng.random((100, 12))).max_deviation)
    avg = averaging_operator(4)
    try:
        recover_tau(avg, force=True)
        npi = False
    except NotPointInduced:
        npi = True
    rep = verify_iso(avg, None)
    witness = rep.violations[0] if rep.violations else None
    ok = worst <= 1e-9 and npi and not rep.multiplicative and witness is not None and "pair" in witness
    return ok, {"exhaustive": exhaustive, "random": 200, "max_deviation": worst,
                "averaging_not_point_induced": npi, "multiplicative_witness": witness}


def a11_lipschitz_bound(ctx):
    X = _grid("grid_euclidean", 0.0, 1.0, 0.1)
    Y = _grid("grid_euclidean", 0.0, 2.0, 0.2)
    tau = np.arange(X.n)
    T = compose_operator(tau, Y.n)
    rep = verify_iso(T, compose_operator(tau, X.n), FunctionAlgebra(Y, "D"), FunctionAlgebra(X, "D"),
                     seed=ctx.seed)
    dbl = lipschitz_bound_check(X, Y, tau, rep.norm_T)
    sq = from_matrix([[0, .5, 1, .5], [.5, 0, .5, 1], [1, .5, 0, .5], [.5, 1, .5, 0]], "square")
    rot = np.array([1, 2, 3, 0])
    Ti = compose_operator(rot, 4)
    rep2 = verify_iso(Ti, compose_operator(np.argsort(rot), 4), FunctionAlgebra(sq, "D"),
                      FunctionAlgebra(sq, "D"), seed=ctx.seed)
    iso = lipschitz_bound_check(sq, sq, rot, rep2.norm_T)
    ok = rep.passed and dbl.passed and rep2.passed and iso.passed and iso.tight
    return ok, {"doubling": {**dbl.to_json(), "norm_Tinv": rep.norm_Tinv},
                "isometry": {**iso.to_json(), "norm_Tinv": rep2.norm_Tinv}}


def a12_determinism(ctx):
    first = [dumps(c.run(ctx)) for c in (CASES_BY_NAME["P_distances"], CASES_BY_NAME["A09_compatibility"])]
    second = [dumps(c.run(ctx)) for c in (CASES_BY_NAME["P_distances"], CASES_BY_NAME["A09_compatibility"])]
    return first == second, {"compared_cases": 2, "identical": first == second}


CASES = [
    Case("P_distances", "closed-form distances on the upper line, Randers line and wedge", p_distances),
    Case("P_symmetrizations", "max and average symmetrizations of the upper line", p_symmetrizations),
    Case("P_step_semi_lipschitz", "step function: SLip 0 away from the jump, Lip infinite at it",
         p_step_semi_lipschitz),
    Case("P_square_at_one", "x^2 at 1: SLip and Lip equal 2", p_square_at_one),
    Case("P_kink_slopes", "-2x / -x kink: descent 1, ascent 2, Lip 2", p_kink_slopes),
    Case("P_snowflake_bumps", "snowflake bumps: sup SLip 0 while Lip ratio at 0 is k", p_snowflake_bumps),
    Case("P_index_examples", "index of symmetry: 1, 0 and min(alpha, 1/alpha)", p_index_examples),
    Case("P_sigma_examples", "pointwise index at the wedge origin and on rho_2", p_sigma_examples),
    Case("A01_index_closed_forms", "criterion 1: index of symmetry closed forms", a01_index),
    Case("A02_slope_examples", "criterion 2: one-sided slope examples at h=1e-5", a02_slopes),
    Case("A03_convergence", "criterion 3: SLip converges to |f'|", a03_convergence),
    Case("A04_rung_identities", "criterion 4: exact rung identities", a04_rung_identities),
    Case("A05_length_lemma", "criterion 5: discrete length lemma", a05_length_lemma),
    Case("A06_upper_gradient", "criterion 6: discrete upper-gradient inequality", a06_upper_gradient),
    Case("A07_quasiconvexity", "criterion 7: quasi-convexity constants", a07_quasiconvexity),
    Case("A08_symmetry_taxonomy", "criterion 8: wedge and interval-union tiers", a08_taxonomy),
    Case("A09_compatibility", "criterion 9: metric compatibility witness", a09_compatibility),
    Case("A10_round_trip", "criterion 10: composition operator round trip", a10_round_trip),
    Case("A11_lipschitz_bound", "criterion 11: Lipschitz bound for the point map", a11_lipschitz_bound),
    Case("A12_determinism", "criterion 12: repeated runs serialise identically", a12_determinism),
]
CASES_BY_NAME = {c.name: c for c in CASES}


def select(filter_text: str | None) -> list[Case]:
    if not filter_text:
        return list(CASES)
    keys = [k.strip().lower() for k in filter_text.split(",") if k.strip()]
    return [c for c in CASES if any(k in c.name.lower() for k in keys)]


def run_cases(cases: list[Case], ctx: Context) -> list[dict]:
    rows = []
    for c in cases:
        try:
            passed, detail = c.run(ctx)
        except Exception as exc:  # a crashing case is a failed case, reported with its error
            passed, detail = False, {"error": f"{type(exc).__name__}: {exc}"}
        rows.append({"name": c.name, "description": c.description, "passed": bool(passed), "detail": detail})
    return rows
