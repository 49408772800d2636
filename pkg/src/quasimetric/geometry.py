"""Discrete curves, quasi-convexity, and the telescoping slope-versus-length bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

from .errors import CurveSpaceMismatch, DegenerateSpace, StepExceedsRadius
from .qspace import QuasiMetricSpace
from .slope import DEFAULT_LADDER, LadderConfig, ScalarField, _ladders, _positive_part, check_field

EDGE_SLACK = 1e-12
QC_GROWTH = 1.3


@dataclass(frozen=True)
class Curve:
    points: tuple[int, ...]
    space_label: str

    def __post_init__(self):
        pts = tuple(int(p) for p in self.points)
        if not pts:
            raise ValueError("a curve needs at least one point")
        object.__setattr__(self, "points", pts)

    @property
    def repeats(self) -> list[int]:
        """Step indices whose two ends coincide."""
        return [i for i in range(len(self.points) - 1) if self.points[i] == self.points[i + 1]]

    def __add__(self, other: "Curve") -> "Curve":
        if other.space_label != self.space_label:
            raise CurveSpaceMismatch("cannot join curves on different spaces")
        tail = other.points[1:] if other.points[0] == self.points[-1] else other.points
        return Curve(self.points + tail, self.space_label)


def curve_on(space: QuasiMetricSpace, points) -> Curve:
    return Curve(tuple(points), space.label)


def _check_curve(space: QuasiMetricSpace, curve: Curve) -> np.ndarray:
    if curve.space_label != space.label:
        raise CurveSpaceMismatch(f"curve is bound to {curve.space_label!r}, not {space.label!r}")
    pts = np.asarray(curve.points, dtype=np.int64)
    if pts.min() < 0 or pts.max() >= space.n:
        raise CurveSpaceMismatch(f"curve visits an index outside 0..{space.n - 1}")
    return pts


def step_lengths(space: QuasiMetricSpace, curve: Curve) -> np.ndarray:
    pts = _check_curve(space, curve)
    return space.pair(pts[:-1], pts[1:])


def curve_length(space: QuasiMetricSpace, curve: Curve) -> float:
    """Sum of consecutive quasi-distances along the curve (+inf absorbs)."""
    return float(np.sum(step_lengths(space, curve)))


# --------------------------------------------------------------------------- quasi-convexity


@dataclass
class QuasiConvexityReport:
    r: float
    K_estimate: float
    worst_pair: tuple[int, int] | None
    diverging: bool
    scales: list[tuple[float, float]] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "r": self.r,
            "K_estimate": self.K_estimate,
            "worst_pair": list(self.worst_pair) if self.worst_pair else None,
            "diverging": self.diverging,
            "scales": [{"r": r, "K": k} for r, k in self.scales],
        }


def r_graph(space: QuasiMetricSpace, r: float) -> csr_matrix:
    """Directed graph with an edge i -> j whenever 0 < d(i, j) <= r, weighted by d(i, j).

    Zero-distance pairs get a tiny positive weight so the sparse format keeps them.
    """
    lim = r * (1 + EDGE_SLACK)
    I = np.arange(space.n)
    lo, hi = space.forward_window(I, lim * (1 + 1e-9) + 1e-300)
    rows, cols, vals = [], [], []
    W = int(np.max(hi - lo)) if space.n else 0
    step = max(1, 2_000_000 // max(W, 1))
    for s in range(0, space.n, step):
        blk = I[s:s + step]
        cand = lo[blk][:, None] + np.arange(W)[None, :]
        ok = cand < hi[blk][:, None]
        cand = np.where(ok, cand, blk[:, None])
        d = space.pair(np.broadcast_to(blk[:, None], cand.shape), cand)
        ok &= (cand != blk[:, None]) & (d <= lim)
        rr, cc = np.nonzero(ok)
        rows.append(blk[rr])
        cols.append(cand[rr, cc])
        vals.append(d[rr, cc])
    rows = np.concatenate(rows) if rows else np.zeros(0, np.int64)
    cols = np.concatenate(cols) if cols else np.zeros(0, np.int64)
    vals = np.concatenate(vals) if vals else np.zeros(0)
    vals = np.where(vals == 0, np.finfo(float).tiny, vals)
    return csr_matrix((vals, (rows, cols)), shape=(space.n, space.n))


def _qc_at(space: QuasiMetricSpace, r: float, sources) -> tuple[float, tuple[int, int] | None, bool]:
    G = r_graph(space, r)
    src = np.arange(space.n) if sources is None else np.asarray(sources, dtype=np.int64)
    SP = shortest_path(G, method="D", directed=True, indices=src)
    D = space.pair(src[:, None], np.arange(space.n)[None, :])
    ok = (D > 0) & np.isfinite(D)
    if not ok.any():
        raise DegenerateSpace("no pair at positive finite distance")
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(ok, SP / np.where(ok, D, 1.0), -np.inf)
    k = int(np.argmax(ratio))
    i, j = divmod(k, space.n)
    K = float(ratio.flat[k])
    return K, (int(src[i]), int(j)), math.isinf(K)


def quasiconvexity_constant(space: QuasiMetricSpace, r: float, sources=None, n_scales: int = 3,
                            growth: float = QC_GROWTH) -> QuasiConvexityReport:
    """Sup over pairs of (shortest r-graph path) / d(x, y), checked at r, 2r, 4r, ...

    ``diverging`` is set when some pair is unreachable at scale r or when K
    grows by at least ``growth`` at every halving of the scale.
    """
    if not r > 0:
        raise ValueError("r must be positive")
    if space.n < 2:
        raise DegenerateSpace("need at least two points")
    scales = []
    worst = None
    unreachable = False
    for k in range(max(1, n_scales)):
        rk = r * 2.0**k
        K, pair, inf = _qc_at(space, rk, sources)
        if k == 0:
            worst, unreachable = pair, inf
        scales.append((rk, K))
    Ks = [K for _, K in scales]
    grows = len(Ks) > 1 and all(
        np.isinf(Ks[i]) or Ks[i] >= growth * Ks[i + 1] for i in range(len(Ks) - 1)
    )
    return QuasiConvexityReport(r, Ks[0], worst, bool(unreachable or grows), scales)


# --------------------------------------------------------------------------- telescoping checks


@dataclass
class MarginReport:
    lhs: float
    rhs: float
    margin: float
    passed: bool
    radius: float
    rung: int
    length: float
    detail: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"lhs": self.lhs, "rhs": self.rhs, "margin": self.margin, "passed": self.passed,
                "radius": self.radius, "rung": self.rung, "length": self.length, **self.detail}


def _rung_for(space, cfg: LadderConfig, need: float, radius: float | None) -> tuple[LadderConfig, int, float]:
    if radius is not None:
        if not need < radius:
            raise StepExceedsRadius(-1, need, radius)
        return LadderConfig(r0=radius, n_rungs=1, m_min=cfg.m_min), 0, float(radius)
    radii = cfg.radii(space)
    above = np.flatnonzero(radii > need)
    if above.size == 0:
        raise StepExceedsRadius(-1, need, float(radii[0]))
    k = int(above[-1])
    # pin the rung count so the ladder keeps rung k even where balls are empty
    return cfg.resolved(space, k + 1), k, float(radii[k])


def _slip_rung(space, f: ScalarField, pts: np.ndarray, cfg: LadderConfig, k: int) -> np.ndarray:
    uniq, inv = np.unique(pts, return_inverse=True)
    (batch,) = _ladders(space, uniq, [_positive_part(f.values)], cfg, "slip")
    return batch.s[inv, k]


def _raise_worst(steps: np.ndarray, radius: float) -> None:
    i = int(np.argmax(steps))
    raise StepExceedsRadius(i, float(steps[i]), radius)


def verify_length_lemma(space: QuasiMetricSpace, f: ScalarField, curve: Curve,
                        cfg: LadderConfig = DEFAULT_LADDER, radius: float | None = None,
                        tol: float = 1e-9) -> MarginReport:
    """f(end) - f(start) <= (max slip rung on the curve) * length.

    The rung used is the smallest ladder radius strictly above every step, so
    each next point lies in the forward ball of the previous one.
    """
    check_field(space, f)
    pts = _check_curve(space, curve)
    steps = space.pair(pts[:-1], pts[1:]) if pts.size > 1 else np.zeros(0)
    need = float(steps.max()) if steps.size else 0.0
    try:
        cfg2, k, r = _rung_for(space, cfg, need, radius)
    except StepExceedsRadius as exc:
        _raise_worst(steps, exc.radius)
    length = float(steps.sum())
    lhs = float(f.values[pts[-1]] - f.values[pts[0]])
    rung = _slip_rung(space, f, pts, cfg2, k)
    top = float(rung.max())
    rhs = top * length if length > 0 else 0.0
    margin = rhs - lhs
    return MarginReport(lhs, rhs, margin, bool(margin >= -tol), r, k, length,
                        {"slip_rung_max": top})


def verify_upper_gradient(space: QuasiMetricSpace, f: ScalarField, curve: Curve,
                          cfg: LadderConfig = DEFAULT_LADDER, radius: float | None = None,
                          tol: float = 1e-9) -> MarginReport:
    """|f(end) - f(start)| <= sum_i max(a_i d(g_i, g_i+1), a_i+1 d(g_i+1, g_i)),

    a_i being the slip rung at g_i. Each step is bounded from both of its ends,
    so the rung radius has to exceed the step length in both directions.
    """
    check_field(space, f)
    pts = _check_curve(space, curve)
    fwd = space.pair(pts[:-1], pts[1:]) if pts.size > 1 else np.zeros(0)
    bwd = space.pair(pts[1:], pts[:-1]) if pts.size > 1 else np.zeros(0)
    both = np.maximum(fwd, bwd)
    need = float(both.max()) if both.size else 0.0
    try:
        cfg2, k, r = _rung_for(space, cfg, need, radius)
    except StepExceedsRadius as exc:
        _raise_worst(both, exc.radius)
    a = _slip_rung(space, f, pts, cfg2, k)
    with np.errstate(invalid="ignore"):
        terms = np.maximum(np.nan_to_num(a[:-1] * fwd), np.nan_to_num(a[1:] * bwd))
    rhs = float(terms.sum())
    lhs = float(abs(f.values[pts[-1]] - f.values[pts[0]]))
    margin = rhs - lhs
    return MarginReport(lhs, rhs, margin, bool(margin >= -tol), r, k, float(fwd.sum()),
                        {"terms_max": float(terms.max()) if terms.size else 0.0})
