"""``qml`` command line: every subcommand prints one RunReport JSON document.

Exit codes: 0 when nothing failed, 1 when a check failed (the report carries
the witness), 2 for unusable input.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import banach_stone as bs
from . import corpus
from .descent import NoWitness, check_metric_compatibility
from .errors import IsoCheckFailed, NotPointInduced
from .geometry import (
    curve_length,
    curve_on,
    quasiconvexity_constant,
    step_lengths,
    verify_length_lemma,
    verify_upper_gradient,
)
from .qspace import QuasiMetricSpace, build_space, from_matrix, path_quasimetric
from .report import (
    dumps,
    jsonable,
    read_edges_csv,
    read_field_csv,
    read_index_csv,
    read_matrix_csv,
    sha256_file,
)
from .slope import (
    ESTIMATORS,
    LadderConfig,
    bind,
    sigma_batch,
    slip_batch,
    verify_constant_ordering,
    verify_lip_decomposition,
)
from .symmetry import Thresholds, classify_symmetry

ANNULUS = 10  # grid steps around an endpoint or declared kink treated as unreliable
CHECK_FAILURES = (NotPointInduced, IsoCheckFailed)


class Run:
    """Collects digests and warnings while a command executes."""

    def __init__(self, command: str):
        self.command = command
        self.inputs: dict = {}
        self.warnings: list[str] = []

    def file(self, role: str, path: str) -> Path:
        p = Path(path)
        self.inputs[role] = {"path": str(path), "sha256": sha256_file(p)}
        return p

    def report(self, results, exit_code: int) -> dict:
        return {"command": self.command, "inputs": self.inputs, "results": results,
                "warnings": self.warnings, "exit_code": exit_code}


# --------------------------------------------------------------------------- loaders


def load_space(run: Run, path: str, fmt: str = "auto", role: str = "space") -> QuasiMetricSpace:
    p = run.file(role, path)
    if fmt == "auto":
        fmt = "recipe" if p.suffix.lower() == ".json" else "edges"
    if fmt == "recipe":
        return build_space(json.loads(p.read_text(encoding="utf-8")))
    if fmt == "edges":
        edges = read_edges_csv(p)
        n = 1 + max((max(i, j) for i, j, _ in edges), default=-1)
        s = path_quasimetric(edges, n, p.stem)
        meta = {"recipe": {"kind": "digraph", "params": {"n": n, "edges": [list(e) for e in edges],
                                                         "label": p.stem}}}
        return QuasiMetricSpace(s.kernel, s.label, None, meta)
    if fmt == "matrix":
        return from_matrix(read_matrix_csv(p), p.stem)
    raise ValueError(f"unknown space format {fmt!r}")


def _eval_expr(space: QuasiMetricSpace, expr: str) -> np.ndarray:
    x = space.coords if space.coords is not None else np.arange(space.n, dtype=float)
    ns = {name: getattr(np, name) for name in (
        "sin", "cos", "tan", "arctan", "exp", "log", "sqrt", "abs", "where", "minimum", "maximum",
        "sign", "floor", "pi", "e")}
    ns.update(x=np.asarray(x, dtype=float), np=np)
    # expressions come from the local user's own command line
    vals = eval(compile(expr, "<expr>", "eval"), {"__builtins__": {}}, ns)
    return np.broadcast_to(np.asarray(vals, dtype=float), (space.n,)).copy()


def load_field(run: Run, space: QuasiMetricSpace, path: str | None, expr: str | None, role: str = "field"):
    if path is not None:
        return bind(space, read_field_csv(run.file(role, path), space.n))
    if expr is not None:
        run.inputs[role] = {"expr": expr}
        return bind(space, _eval_expr(space, expr))
    raise ValueError(f"missing {role} input: give a CSV file or an expression")


def load_curve(run: Run, space: QuasiMetricSpace, path: str | None, points: str | None):
    if path is not None:
        pts = read_index_csv(run.file("curve", path))
    elif points is not None:
        run.inputs["curve"] = {"points": points}
        pts = _parse_points(points)
    else:
        raise ValueError("give --curve FILE or --points LIST")
    return curve_on(space, pts)


def _parse_points(text: str) -> list[int]:
    """``0,3,5`` or an inclusive range ``a:b`` (descending when a > b)."""
    if ":" in text:
        a, b = (int(t) for t in text.split(":", 1))
        return list(range(a, b + 1)) if a <= b else list(range(a, b - 1, -1))
    return [int(t) for t in text.split(",") if t.strip()]


def load_operator(run: Run, path: str, role: str) -> bs.AlgebraOperator:
    return bs.AlgebraOperator(read_matrix_csv(run.file(role, path)))


def ladder_from(args) -> LadderConfig:
    kw = {}
    for attr, key in (("r0", "r0"), ("ratio", "ratio"), ("rungs", "n_rungs"), ("m_min", "m_min"),
                      ("growth", "growth_factor"), ("cap", "divergence_cap")):
        v = getattr(args, attr, None)
        if v is not None:
            kw[key] = v
    return LadderConfig(**kw)


def _point(space: QuasiMetricSpace, index: int | None, at: float | None, name: str = "x0") -> int:
    if index is not None:
        if not 0 <= index < space.n:
            raise ValueError(f"{name}={index} outside 0..{space.n - 1}")
        return index
    if at is not None:
        if space.coords is None:
            raise ValueError(f"space has no coordinates; pass the {name} index instead")
        return int(np.argmin(np.abs(space.coords - at)))
    raise ValueError(f"missing {name}")


def _annulus(space: QuasiMetricSpace, kinks: list[float]) -> np.ndarray:
    """Mask of grid points within ANNULUS steps of an endpoint or a declared kink."""
    h = space.meta.get("h")
    if space.coords is None or h is None:
        return np.zeros(space.n, dtype=bool)
    x = space.coords
    near = (x - x[0] < ANNULUS * h * (1 - 1e-9)) | (x[-1] - x < ANNULUS * h * (1 - 1e-9))
    for k in kinks:
        near |= np.abs(x - k) < ANNULUS * h * (1 - 1e-9)
    return near


# --------------------------------------------------------------------------- commands


def cmd_space(args, run: Run):
    space = load_space(run, args.recipe, args.format, role="recipe")
    summary = {"label": space.label, "kind": space.meta.get("recipe", {}).get("kind", "matrix"),
               "n": space.n, "symmetric": space.is_symmetric(), "diameter": space.diameter(),
               "valid": True}
    if "h" in space.meta:
        summary["h"] = space.meta["h"]
    if args.out:
        Path(args.out).write_text(dumps(space.to_json()) + "\n", encoding="utf-8")
        summary["written"] = args.out
    return summary, 0


def cmd_slope(args, run: Run):
    space = load_space(run, args.space, args.format)
    cfg = ladder_from(args)
    if args.kind == "sigma":
        fn = lambda pts: sigma_batch(space, cfg, pts)  # noqa: E731
    else:
        f = load_field(run, space, args.field, args.expr)
        if args.kind == "descent_modulus":
            fn = lambda pts: slip_batch(space, -f, cfg, pts, kind="descent_modulus")  # noqa: E731
        else:
            batch_fn = ESTIMATORS[args.kind]
            fn = lambda pts: batch_fn(space, f, cfg, pts)  # noqa: E731
    if args.all:
        batch = fn(None)
        near = _annulus(space, args.kink or [])
        if near.any():
            idx = np.flatnonzero(near)
            run.warnings.append(f"{idx.size} points lie within {ANNULUS}h of an endpoint or kink; "
                                "their estimates see a one-sided or broken neighbourhood")
        r_K = np.where(batch.K >= 0, batch.radii[np.maximum(batch.K, 0)], math.nan)
        res = {"kind": args.kind, "n": int(len(batch)), "sup": batch.sup(),
               "x0": batch.points, "estimate": batch.estimate, "diverging": batch.diverging,
               "r_K": [None if math.isnan(v) else v for v in r_K.tolist()],
               "annulus": np.flatnonzero(near)}
        if batch.symmetrized:
            res["symmetrized"] = True
        return res, 0
    x0 = _point(space, args.x0, args.at)
    return fn([x0]).at(0), 0


def cmd_symmetry(args, run: Run):
    space = load_space(run, args.space, args.format)
    th = Thresholds(args.local_jump, args.uniform_bound)
    rep = classify_symmetry(space, ladder_from(args), th).to_json()
    if args.brief:
        rep["sigma"] = [{"x0": s["x0"], "estimate": s["estimate"], "diverging": s["diverging"]}
                        for s in rep["sigma"]]
    return rep, 0


def cmd_geom(args, run: Run):
    space = load_space(run, args.space, args.format)
    if args.geom == "length":
        c = load_curve(run, space, args.curve, args.points)
        return {"length": curve_length(space, c), "steps": step_lengths(space, c),
                "repeats": c.repeats}, 0
    src = None if args.sources is None else _parse_points(args.sources)
    return quasiconvexity_constant(space, args.r, src, args.scales, args.growth), 0


def cmd_verify(args, run: Run):
    space = load_space(run, args.space, args.format)
    cfg = ladder_from(args)
    chk = args.check
    if chk in ("length-lemma", "upper-gradient"):
        f = load_field(run, space, args.field, args.expr)
        c = load_curve(run, space, args.curve, args.points)
        fn = verify_length_lemma if chk == "length-lemma" else verify_upper_gradient
        rep = fn(space, f, c, cfg, args.radius)
        return rep, 0 if rep.passed else 1
    if chk in ("lip-decomposition", "ordering"):
        f = load_field(run, space, args.field, args.expr)
        x0 = _point(space, args.x0, args.at)
        fn = verify_lip_decomposition if chk == "lip-decomposition" else verify_constant_ordering
        rep = fn(space, f, x0, cfg)
        return {"x0": x0, **rep.to_json()}, 0 if rep.passed else 1
    f = load_field(run, space, args.f_field, args.f_expr, role="f")
    g = load_field(run, space, args.g_field, args.g_expr, role="g")
    x = _point(space, args.x, args.x_at, "x")
    cand = None if args.candidates is None else read_index_csv(run.file("candidates", args.candidates))
    out = check_metric_compatibility(space, f, g, x, args.delta, args.rho, args.K, cfg, cand)
    if isinstance(out, NoWitness):
        return out, 1
    return {"witness": out.to_json()}, 0


def _algebras(run: Run, args):
    if not (args.space_x and args.space_y):
        return None, None
    X = load_space(run, args.space_x, args.format, "space_x")
    Y = load_space(run, args.space_y, args.format, "space_y")
    return bs.FunctionAlgebra(Y, args.norm), bs.FunctionAlgebra(X, args.norm)


def cmd_bs(args, run: Run):
    T = load_operator(run, args.operator, "operator")
    Tinv = None if args.inverse is None else load_operator(run, args.inverse, "inverse")
    if args.bs == "verify":
        algY, algX = _algebras(run, args)
        rep = bs.verify_iso(T, Tinv, algY, algX, seed=args.seed, n_random=args.samples)
        return rep, 0 if rep.passed else 1
    if args.bs == "recover":
        tau = bs.recover_tau(T, Tinv, force=args.force)
        return {"tau": tau}, 0
    algY, algX = _algebras(run, args)
    if algY is None:
        raise ValueError("bs bound needs --space-x and --space-y")
    tau = bs.recover_tau(T, Tinv)
    inv = Tinv if Tinv is not None else bs._inverse(T)
    iso = bs.verify_iso(T, inv, algY, algX, seed=args.seed, n_random=args.samples)
    rep = bs.lipschitz_bound_check(algX.space, algY.space, tau, iso.norm_T)
    return {"tau": tau, "norm_Tinv": iso.norm_Tinv, **rep.to_json()}, 0 if rep.passed else 1


def cmd_corpus(args, run: Run):
    if args.list:
        return {"cases": [{"name": c.name, "description": c.description} for c in corpus.CASES]}, 0
    run.inputs["params"] = {"seed": args.seed, "h": args.h, "filter": args.filter}
    cases = corpus.select(args.filter)
    if not cases:
        raise ValueError(f"filter {args.filter!r} matches no corpus case")
    rows = corpus.run_cases(cases, corpus.Context(seed=args.seed, h=args.h))
    width = max(len(r["name"]) for r in rows)
    for r in rows:
        print(f"{'PASS' if r['passed'] else 'FAIL'}  {r['name']:<{width}}  {r['description']}", file=sys.stderr)
    failed = [r["name"] for r in rows if not r["passed"]]
    print(f"{len(rows) - len(failed)}/{len(rows)} passed", file=sys.stderr)
    return {"cases": rows, "passed": len(rows) - len(failed), "failed": failed}, 1 if failed else 0


# --------------------------------------------------------------------------- parser


def _ladder_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("ladder")
    g.add_argument("--r0", type=float, help="largest radius (default: a quarter of the diameter)")
    g.add_argument("--ratio", type=float, help="radius ratio between rungs (default 0.5)")
    g.add_argument("--rungs", type=int, help="fixed number of rungs (default: automatic)")
    g.add_argument("--m-min", type=int, help="neighbours needed for a usable rung (default 3)")
    g.add_argument("--growth", type=float, help="growth factor that flags divergence (default 2)")
    g.add_argument("--cap", type=float, help="estimates above this are diverging (default 1e6)")


def _space_flag(p: argparse.ArgumentParser, required: bool = True) -> None:
    p.add_argument("--space", required=required, help="space file: recipe JSON or edge-list CSV")
    p.add_argument("--format", choices=("auto", "recipe", "edges", "matrix"), default="auto",
                   help="space file format (default: by suffix)")


def _field_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_mutually_exclusive_group()
    g.add_argument("--field", help="CSV of index,value rows")
    g.add_argument("--expr", help="numpy expression in x, e.g. 'x**2'")


def _point_flags(p: argparse.ArgumentParser, all_flag: bool = False) -> None:
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--x0", type=int, help="point index")
    g.add_argument("--at", type=float, help="grid coordinate (nearest point)")
    if all_flag:
        g.add_argument("--all", action="store_true", help="every point, ordered by index")


def _curve_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--curve", help="CSV with one point index per line")
    g.add_argument("--points", help="indices '0,1,2' or inclusive range 'a:b'")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--report", help="write the RunReport here instead of stdout")

    ap = argparse.ArgumentParser(prog="qml", description="Analysis on finite quasi-metric spaces.")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("space", parents=[common], help="build and validate a space")
    p.add_argument("recipe", help="recipe JSON, edge-list CSV or matrix CSV")
    p.add_argument("--format", choices=("auto", "recipe", "edges", "matrix"), default="auto")
    p.add_argument("--out", help="write the space file here")
    p.set_defaults(fn=cmd_space)

    p = sub.add_parser("slope", parents=[common], help="pointwise slope estimates")
    _space_flag(p)
    _field_flags(p)
    p.add_argument("--kind", choices=sorted(ESTIMATORS) + ["descent_modulus", "sigma"], default="slip")
    _point_flags(p, all_flag=True)
    p.add_argument("--kink", type=float, action="append",
                   help="known non-smooth coordinate, excluded as unreliable with --all (repeatable)")
    _ladder_flags(p)
    p.set_defaults(fn=cmd_slope)

    p = sub.add_parser("symmetry", parents=[common], help="symmetry index and tier")
    _space_flag(p)
    p.add_argument("--local-jump", type=float, default=Thresholds.local_jump)
    p.add_argument("--uniform-bound", type=float)
    p.add_argument("--brief", action="store_true", help="omit per-point ladders")
    _ladder_flags(p)
    p.set_defaults(fn=cmd_symmetry)

    p = sub.add_parser("geom", help="curves and quasi-convexity")
    gsub = p.add_subparsers(dest="geom", required=True)
    q = gsub.add_parser("length", parents=[common], help="length of a discrete curve")
    _space_flag(q)
    _curve_flags(q)
    q.set_defaults(fn=cmd_geom)
    q = gsub.add_parser("qc", parents=[common], help="quasi-convexity constant")
    _space_flag(q)
    q.add_argument("--r", type=float, required=True, help="largest allowed step")
    q.add_argument("--scales", type=int, default=3)
    q.add_argument("--growth", type=float, default=1.3)
    q.add_argument("--sources", help="restrict start points: '0,5' or 'a:b'")
    q.set_defaults(fn=cmd_geom)

    p = sub.add_parser("verify", help="exact discrete inequalities")
    vsub = p.add_subparsers(dest="check", required=True)
    for name in ("length-lemma", "upper-gradient"):
        q = vsub.add_parser(name, parents=[common])
        _space_flag(q)
        _field_flags(q)
        _curve_flags(q)
        q.add_argument("--radius", type=float, help="fixed rung radius instead of the ladder")
        _ladder_flags(q)
        q.set_defaults(fn=cmd_verify)
    for name in ("lip-decomposition", "ordering"):
        q = vsub.add_parser(name, parents=[common])
        _space_flag(q)
        _field_flags(q)
        _point_flags(q)
        _ladder_flags(q)
        q.set_defaults(fn=cmd_verify)
    q = vsub.add_parser("compat", parents=[common], help="metric compatibility witness search")
    _space_flag(q)
    for fld in ("f", "g"):
        g = q.add_mutually_exclusive_group(required=True)
        g.add_argument(f"--{fld}-field")
        g.add_argument(f"--{fld}-expr")
    g = q.add_mutually_exclusive_group(required=True)
    g.add_argument("--x", type=int)
    g.add_argument("--x-at", type=float)
    q.add_argument("--delta", type=float, required=True)
    q.add_argument("--rho", type=float, required=True)
    q.add_argument("--K", type=float, help="symmetry constant (default: measured sup of sigma)")
    q.add_argument("--candidates", help="CSV of candidate z indices")
    _ladder_flags(q)
    q.set_defaults(fn=cmd_verify)

    p = sub.add_parser("bs", help="composition operators on finite function algebras")
    bsub = p.add_subparsers(dest="bs", required=True)
    for name in ("verify", "recover", "bound"):
        q = bsub.add_parser(name, parents=[common])
        q.add_argument("--operator", required=True, help="CSV matrix, X rows by Y columns")
        q.add_argument("--inverse", help="CSV matrix of the inverse operator")
        if name == "recover":
            q.add_argument("--force", action="store_true", help="skip the isomorphism pre-check")
        else:
            q.add_argument("--space-x")
            q.add_argument("--space-y")
            q.add_argument("--format", choices=("auto", "recipe", "edges", "matrix"), default="auto")
            q.add_argument("--norm", choices=("C", "D"), default="D")
            q.add_argument("--samples", type=int, default=bs.N_RANDOM)
            q.add_argument("--seed", type=int, required=True)
        q.set_defaults(fn=cmd_bs)

    p = sub.add_parser("corpus", help="named regression cases")
    csub = p.add_subparsers(dest="corpus", required=True)
    q = csub.add_parser("run", parents=[common])
    q.add_argument("--seed", type=int, required=True)
    q.add_argument("--filter", help="comma-separated name substrings")
    q.add_argument("--h", type=float, help="override the grid step of the convergence cases")
    q.add_argument("--list", action="store_true", help="list case names without running them")
    q.set_defaults(fn=cmd_corpus)
    return ap


def _error_payload(exc: BaseException) -> dict:
    err = {"type": type(exc).__name__, "message": str(exc)}
    for attr in ("triple", "excess", "pair", "x", "candidates", "step", "length", "radius", "x0"):
        if hasattr(exc, attr):
            err[attr] = getattr(exc, attr)
    if isinstance(exc, IsoCheckFailed):
        err["report"] = exc.report
    return {"error": err}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    name = " ".join(x for x in (args.cmd, getattr(args, "geom", None), getattr(args, "check", None),
                                getattr(args, "bs", None), getattr(args, "corpus", None)) if x)
    run = Run(name)
    try:
        results, code = args.fn(args, run)
    except CHECK_FAILURES as exc:
        results, code = _error_payload(exc), 1
    except Exception as exc:  # any other failure is treated as unusable input
        results, code = _error_payload(exc), 2
    text = dumps(run.report(jsonable(results), code)) + "\n"
    if args.report:
        Path(args.report).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
