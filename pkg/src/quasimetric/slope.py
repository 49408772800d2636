"""Pointwise Lipschitz-type constants estimated on a ladder of shrinking balls.

For a centre x0 and radii r_0 > r_1 > ... every estimator records the finite
supremum s_k of a ratio numerator(x0, x) / d(x0, x) over the open ball of
radius r_k, together with the neighbour count m_k. The reported estimate is
s_K at the deepest rung with at least ``m_min`` neighbours.

All estimators are batched: the candidate neighbours of many centres are
gathered into one (points x window) index matrix, every candidate is binned by
the deepest rung whose ball contains it, and per-rung suprema fall out of a
scatter-max followed by a suffix maximum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .errors import EmptySet, EstimateUndefined, FieldSpaceMismatch, SetsNotSeparated
from .qspace import QuasiMetricSpace, symmetrize

KINDS = ("lip", "slip", "ascent_slope", "descent_slope", "descent_modulus", "sigma")
BLOCK_BUDGET = 2_000_000
RISE = 1 + 1e-9  # a level counts as higher only past rounding noise


@dataclass(frozen=True)
class LadderConfig:
    """Radius ladder parameters.

    ``r0=None`` means a quarter of the diameter. ``n_rungs=None`` lets the
    ladder run until it passes the last rung with ``m_min`` neighbours (one
    unusable rung is kept so the cut-off is visible), capped at ``max_rungs``.
    """

    r0: float | None = None
    ratio: float = 0.5
    n_rungs: int | None = None
    m_min: int = 3
    growth_factor: float = 2.0
    divergence_cap: float = 1e6
    max_rungs: int = 64

    def __post_init__(self):
        if self.r0 is not None and not self.r0 > 0:
            raise ValueError("r0 must be positive")
        if not 0 < self.ratio < 1:
            raise ValueError("ratio must lie in (0, 1)")
        if self.n_rungs is not None and self.n_rungs < 1:
            raise ValueError("n_rungs must be at least 1")
        if self.m_min < 1:
            raise ValueError("m_min must be at least 1")

    def start_radius(self, space: QuasiMetricSpace) -> float:
        if self.r0 is not None:
            return float(self.r0)
        diam = space.diameter()
        return diam / 4.0 if diam > 0 else 1.0

    def radii(self, space: QuasiMetricSpace) -> np.ndarray:
        count = self.n_rungs if self.n_rungs is not None else self.max_rungs
        return self.start_radius(space) * self.ratio ** np.arange(count)

    def resolved(self, space: QuasiMetricSpace, n_rungs: int | None = None) -> "LadderConfig":
        return replace(self, r0=self.start_radius(space), n_rungs=n_rungs or self.n_rungs)


DEFAULT_LADDER = LadderConfig()


# --------------------------------------------------------------------------- fields


@dataclass(frozen=True, eq=False)
class ScalarField:
    values: np.ndarray
    space_label: str
    derivative: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 1:
            raise ValueError("field values must be one-dimensional")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return self.values.size

    def __neg__(self) -> "ScalarField":
        deriv = None if self.derivative is None else (lambda x, d=self.derivative: -d(x))
        return ScalarField(-self.values, self.space_label, deriv)


def bind(space: QuasiMetricSpace, values, derivative=None) -> ScalarField:
    f = ScalarField(values, space.label, derivative)
    check_field(space, f)
    return f


def from_function(space: QuasiMetricSpace, fn: Callable, derivative: Callable | None = None) -> ScalarField:
    if space.coords is None:
        raise ValueError(f"space {space.label!r} has no coordinates to evaluate a function on")
    return ScalarField(fn(space.coords), space.label, derivative)


def check_field(space: QuasiMetricSpace, f: ScalarField) -> None:
    if len(f) != space.n:
        raise FieldSpaceMismatch(f"field has {len(f)} values but space {space.label!r} has {space.n} points")
    if f.space_label != space.label:
        raise FieldSpaceMismatch(f"field is bound to {f.space_label!r}, not {space.label!r}")


# --------------------------------------------------------------------------- estimates


@dataclass(frozen=True)
class Rung:
    r: float
    s: float
    m: int


@dataclass(frozen=True)
class SlopeEstimate:
    kind: str
    x0: int
    ladder: tuple[Rung, ...]
    estimate: float
    diverging: bool
    usable: int | None = None  # rung index the estimate was read from
    symmetrized: bool = False

    def to_json(self) -> dict:
        out = {
            "kind": self.kind,
            "x0": self.x0,
            "ladder": [{"r": g.r, "s": g.s, "m": g.m} for g in self.ladder],
            "estimate": self.estimate,
            "diverging": self.diverging,
        }
        if self.symmetrized:
            out["symmetrized"] = True
        return out

    @property
    def s(self) -> np.ndarray:
        return np.array([g.s for g in self.ladder])

    @property
    def radii(self) -> np.ndarray:
        return np.array([g.r for g in self.ladder])


@dataclass
class EstimateBatch:
    """Ladders for many centres at once; row p belongs to ``points[p]``."""

    kind: str
    points: np.ndarray
    radii: np.ndarray
    s: np.ndarray        # ball suprema, (P, R)
    shell: np.ndarray    # suprema over r_{k+1} <= d < r_k, (P, R)
    m: np.ndarray        # neighbour counts, (P, R)
    length: np.ndarray   # ladder length kept per point
    K: np.ndarray        # rung of the estimate, -1 for isolated points
    estimate: np.ndarray
    diverging: np.ndarray
    symmetrized: bool = False

    def __len__(self) -> int:
        return self.points.size

    def at(self, p: int) -> SlopeEstimate:
        L = int(self.length[p])
        ladder = tuple(Rung(float(self.radii[k]), float(self.s[p, k]), int(self.m[p, k])) for k in range(L))
        K = int(self.K[p])
        return SlopeEstimate(self.kind, int(self.points[p]), ladder, float(self.estimate[p]),
                             bool(self.diverging[p]), None if K < 0 else K, self.symmetrized)

    def estimates(self) -> list[SlopeEstimate]:
        return [self.at(p) for p in range(len(self))]

    def sup(self) -> float:
        if len(self) == 0:
            return 0.0
        if self.diverging.any():
            return math.inf
        return float(self.estimate.max())


@dataclass
class _Block:
    """In-ball pairs of one block of centres, flattened.

    ``row`` is the centre's offset inside the block, ``x``/``c`` the centre and
    candidate indices, ``d`` their positive distance and ``bin`` the deepest
    rung whose open ball holds the candidate. Distinct points at distance 0
    are kept apart in ``zrow``/``zx``/``zc``.
    """

    rows: slice
    row: np.ndarray
    x: np.ndarray
    c: np.ndarray
    d: np.ndarray
    bin: np.ndarray
    zrow: np.ndarray
    zx: np.ndarray
    zc: np.ndarray


@dataclass
class _Geometry:
    radii: np.ndarray
    blocks: list
    counts: np.ndarray  # neighbours per shell, (P, R)


def _geometry(space: QuasiMetricSpace, X0: np.ndarray, cfg: LadderConfig) -> _Geometry:
    radii = cfg.radii(space)
    key = ("geom", float(radii[0]), cfg.ratio, radii.size, X0.size, hash(X0.tobytes()))
    cached = space._cache.get(key)
    if cached is not None:
        return cached

    R = radii.size
    r0 = float(radii[0])
    lo, hi = space.forward_window(X0, r0)
    width = np.maximum(hi - lo, 0)
    wmax = int(width.max()) if width.size else 0
    step = max(1, BLOCK_BUDGET // max(1, wmax))
    neg = -radii
    blocks = []
    for s in range(0, X0.size, step):
        rows = slice(s, min(X0.size, s + step))
        x0 = X0[rows][:, None]
        W = int(width[rows].max()) if width[rows].size else 0
        cand = lo[rows][:, None] + np.arange(W)[None, :]
        valid = cand < hi[rows][:, None]
        cand = np.where(valid, cand, x0)
        d = space.pair(np.broadcast_to(x0, cand.shape), cand)
        inball = valid & (cand != x0) & (d < r0)
        zero = inball & (d == 0)
        sel = inball & ~zero
        local = np.broadcast_to(np.arange(cand.shape[0])[:, None], cand.shape)
        ds = d[sel]
        # deepest rung k with d < r_k, found by counting radii strictly above d
        bins = np.searchsorted(neg, -ds, side="left") - 1
        blocks.append(_Block(rows, local[sel], np.broadcast_to(x0, cand.shape)[sel], cand[sel], ds, bins,
                             local[zero], np.broadcast_to(x0, cand.shape)[zero], cand[zero]))
    if cfg.n_rungs is None:
        # an automatic ladder never needs more than one rung past the deepest neighbour
        deepest = max((int(b.bin.max()) for b in blocks if b.bin.size), default=0)
        R = min(R, deepest + 2)
        radii = radii[:R]
    counts = np.zeros((X0.size, R), dtype=np.int64)
    for b in blocks:
        nb = b.rows.stop - b.rows.start
        counts[b.rows] = np.bincount(b.row * R + b.bin, minlength=nb * R).reshape(nb, R)
    geom = _Geometry(radii, blocks, counts)
    space._cache[key] = geom
    return geom


Numerator = Callable[[np.ndarray, np.ndarray], np.ndarray]


def _ladders(space: QuasiMetricSpace, X0, numerators: Sequence[Numerator], cfg: LadderConfig,
             kind: str, symmetrized: bool = False) -> list[EstimateBatch]:
    """Run several numerators against one shared ball geometry."""
    X0 = np.atleast_1d(np.asarray(X0, dtype=np.int64))
    if X0.size and (X0.min() < 0 or X0.max() >= space.n):
        raise IndexError(f"point index out of range for a space with {space.n} points")
    geom = _geometry(space, X0, cfg)
    R = geom.radii.size
    P = X0.size
    m = np.cumsum(geom.counts[:, ::-1], axis=1)[:, ::-1]

    usable = m >= cfg.m_min
    nonempty = m > 0
    last_usable = np.where(usable.any(1), R - 1 - np.argmax(usable[:, ::-1], axis=1), -1)
    last_nonempty = np.where(nonempty.any(1), R - 1 - np.argmax(nonempty[:, ::-1], axis=1), -1)
    K = np.where(last_usable >= 0, last_usable, last_nonempty)
    if cfg.n_rungs is not None:
        length = np.where(nonempty[:, 0], R, 0)
    else:
        length = np.where(K >= 0, np.minimum(R, K + 2), 0)

    out = []
    for num in numerators:
        shell = np.zeros(P * R)
        for b in geom.blocks:
            if b.zx.size:
                bad = num(b.zx, b.zc) > 0
                if bad.any():
                    w = int(np.argmax(bad))
                    raise EstimateUndefined(int(b.zx[w]), int(b.zc[w]))
            ratio = num(b.x, b.c) / b.d
            ratio[np.isnan(ratio)] = 0.0
            np.maximum.at(shell, (b.rows.start + b.row) * R + b.bin, ratio)
        shell = shell.reshape(P, R)
        s = np.maximum.accumulate(shell[:, ::-1], axis=1)[:, ::-1]
        rowsP = np.arange(P)
        Kc = np.maximum(K, 0)
        est = np.where(K >= 0, s[rowsP, Kc], 0.0)
        # growth: the sup rises strictly across the last three levels (shell two
        # rungs up, shell one rung up, ball at the estimate rung) by growth_factor
        # overall; a lone deep neighbour in another direction is not a trend
        deep = K >= 2
        ref = np.where(deep, shell[rowsP, np.maximum(K - 2, 0)], 0.0)
        mid = np.where(deep, shell[rowsP, np.maximum(K - 1, 0)], 0.0)
        grows = (deep & (ref > 0) & (ref * RISE < mid) & (mid * RISE < est)
                 & (est >= cfg.growth_factor * ref))
        div = (K >= 0) & (grows | (est > cfg.divergence_cap))
        out.append(EstimateBatch(kind, X0, geom.radii, s, shell, m, length, K, est, div, symmetrized))
    return out


# --------------------------------------------------------------------------- numerators


def _positive_part(values: np.ndarray, sign: float = 1.0) -> Numerator:
    def num(x0, cand):
        return np.maximum(sign * (values[cand] - values[x0]), 0.0)
    return num


def _absolute(values: np.ndarray) -> Numerator:
    def num(x0, cand):
        return np.abs(values[cand] - values[x0])
    return num


def _working_space(space: QuasiMetricSpace) -> tuple[QuasiMetricSpace, bool]:
    if space.is_symmetric():
        return space, False
    key = "sym_max_view"
    if key not in space._cache:
        space._cache[key] = symmetrize(space, "max")
    return space._cache[key], True


def _points(space: QuasiMetricSpace, points) -> np.ndarray:
    if points is None:
        return np.arange(space.n)
    return np.atleast_1d(np.asarray(points, dtype=np.int64))


def slip_batch(space, f: ScalarField, cfg: LadderConfig = DEFAULT_LADDER, points=None,
               kind: str = "slip") -> EstimateBatch:
    check_field(space, f)
    return _ladders(space, _points(space, points), [_positive_part(f.values)], cfg, kind)[0]


def lip_batch(space, f: ScalarField, cfg: LadderConfig = DEFAULT_LADDER, points=None) -> EstimateBatch:
    check_field(space, f)
    work, flag = _working_space(space)
    return _ladders(work, _points(space, points), [_absolute(f.values)], cfg, "lip", flag)[0]


def ascent_batch(space, f, cfg=DEFAULT_LADDER, points=None) -> EstimateBatch:
    check_field(space, f)
    work, flag = _working_space(space)
    return _ladders(work, _points(space, points), [_positive_part(f.values)], cfg, "ascent_slope", flag)[0]


def descent_batch(space, f, cfg=DEFAULT_LADDER, points=None) -> EstimateBatch:
    check_field(space, f)
    work, flag = _working_space(space)
    return _ladders(work, _points(space, points), [_positive_part(f.values, -1.0)], cfg,
                    "descent_slope", flag)[0]


def sigma_batch(space, cfg=DEFAULT_LADDER, points=None) -> EstimateBatch:
    def num(x0, cand):
        return space.pair(cand, np.broadcast_to(x0, cand.shape))
    return _ladders(space, _points(space, points), [num], cfg, "sigma")[0]


def slip_at(space, f, x0: int, cfg: LadderConfig = DEFAULT_LADDER) -> SlopeEstimate:
    return slip_batch(space, f, cfg, [x0]).at(0)


def lip_at(space, f, x0: int, cfg: LadderConfig = DEFAULT_LADDER) -> SlopeEstimate:
    return lip_batch(space, f, cfg, [x0]).at(0)


def ascent_slope_at(space, f, x0: int, cfg: LadderConfig = DEFAULT_LADDER) -> SlopeEstimate:
    return ascent_batch(space, f, cfg, [x0]).at(0)


def descent_slope_at(space, f, x0: int, cfg: LadderConfig = DEFAULT_LADDER) -> SlopeEstimate:
    return descent_batch(space, f, cfg, [x0]).at(0)


ESTIMATORS = {
    "slip": slip_batch,
    "lip": lip_batch,
    "ascent_slope": ascent_batch,
    "descent_slope": descent_batch,
}


def slip_sup(space, f: ScalarField, cfg: LadderConfig = DEFAULT_LADDER) -> float:
    """Largest pointwise estimate; +inf as soon as any point's ladder diverges."""
    return slip_batch(space, f, cfg).sup()


def slip_rungs_many(space, F: np.ndarray, cfg: LadderConfig) -> list[EstimateBatch]:
    """slip ladders at every point for each row of ``F``, sharing one geometry pass."""
    F = np.atleast_2d(np.asarray(F, float))
    return _ladders(space, np.arange(space.n), [_positive_part(row) for row in F], cfg, "slip")


# --------------------------------------------------------------------------- exact rung checks


@dataclass(frozen=True)
class RungCheck:
    passed: bool
    worst_rung: int | None
    worst_gap: float
    radii: tuple[float, ...]
    sides: dict = field(default_factory=dict)
    symmetrized: bool = False

    def to_json(self) -> dict:
        return {
            "passed": self.passed,
            "worst_rung": self.worst_rung,
            "worst_gap": self.worst_gap,
            "radii": list(self.radii),
            "sides": {k: list(v) for k, v in self.sides.items()},
            "symmetrized": self.symmetrized,
        }


def _fixed(space, cfg: LadderConfig, x0: int) -> LadderConfig:
    """Freeze a ladder so several estimators share exactly the same radii."""
    if cfg.n_rungs is not None:
        return cfg.resolved(space)
    probe = _ladders(space, [x0], [lambda a, b: np.zeros(b.shape)], cfg, "probe")[0]
    return cfg.resolved(space, max(1, int(probe.length[0])))


def verify_lip_decomposition(space, f: ScalarField, x0: int, cfg: LadderConfig = DEFAULT_LADDER) -> RungCheck:
    """Rung by rung, lip == max(slip f, slip(-f)) with no tolerance."""
    check_field(space, f)
    work, flag = _working_space(space)
    fixed = _fixed(work, cfg, x0)
    v = f.values
    lip, up, down = _ladders(work, [x0], [_absolute(v), _positive_part(v), _positive_part(-v)], fixed, "lip")
    a = lip.s[0]
    b = np.maximum(up.s[0], down.s[0])
    gap = np.abs(a - b)
    gap = np.where(np.isnan(gap), 0.0, gap)
    bad = np.flatnonzero(a != b)
    worst = int(np.argmax(gap)) if gap.size else None
    return RungCheck(bad.size == 0, worst, float(gap.max()) if gap.size else 0.0,
                     tuple(map(float, fixed.radii(work))),
                     {"lip": a.tolist(), "slip_f": up.s[0].tolist(), "slip_neg_f": down.s[0].tolist()}, flag)


def verify_constant_ordering(space, f: ScalarField, x0: int, cfg: LadderConfig = DEFAULT_LADDER) -> RungCheck:
    """Per rung: SLip over (X, d^s) <= SLip over (X, d) <= SLip over (X, d) into (R, |.|).

    The left side shrinks the ball and enlarges the denominator; the right side
    enlarges the numerator. Both hold exactly at every finite radius.
    """
    check_field(space, f)
    fixed = _fixed(space, cfg, x0)
    sym, _ = _working_space(space)
    v = f.values
    mid, right = _ladders(space, [x0], [_positive_part(v), _absolute(v)], fixed, "slip")
    (left,) = _ladders(sym, [x0], [_positive_part(v)], fixed, "slip")
    a, b, c = left.s[0], mid.s[0], right.s[0]
    excess = np.maximum(a - b, b - c)
    ok = bool(np.all(a <= b) and np.all(b <= c))
    worst = int(np.argmax(excess)) if excess.size else None
    return RungCheck(ok, worst, float(max(excess.max(), 0.0)) if excess.size else 0.0,
                     tuple(map(float, fixed.radii(space))),
                     {"symmetric_domain": a.tolist(), "quasi": b.tolist(), "symmetric_target": c.tolist()})


# --------------------------------------------------------------------------- witness fields


def _sym_to_set(space: QuasiMetricSpace, S: np.ndarray) -> np.ndarray:
    out = np.full(space.n, np.inf)
    for a in S:
        out = np.minimum(out, np.maximum(space.row(int(a)), space.col(int(a))))
    return out


def separation_field(space: QuasiMetricSpace, A, B) -> ScalarField:
    """d^s(x, A) / (d^s(x, A) + d^s(x, B)): zero on A, one on B."""
    A = np.unique(np.asarray(A, dtype=np.int64))
    B = np.unique(np.asarray(B, dtype=np.int64))
    if A.size == 0 or B.size == 0:
        raise EmptySet("both sets must be nonempty")
    dA = _sym_to_set(space, A)
    dB = _sym_to_set(space, B)
    gap = float(dA[B].min())
    if not gap > 0:
        raise SetsNotSeparated("the sets are at symmetrized distance 0")
    with np.errstate(invalid="ignore"):
        vals = np.where(np.isinf(dA) & np.isinf(dB), 0.5,
                        np.where(np.isinf(dA), 1.0, np.where(np.isinf(dB), 0.0, dA / (dA + dB))))
    return bind(space, vals)


def truncated_distance_field(space: QuasiMetricSpace, q: int, cap: float) -> ScalarField:
    """min(d(q, y), cap)."""
    if not cap > 0:
        raise ValueError("cap must be positive")
    return bind(space, np.minimum(space.row(int(q)), cap))


def ball_max(space: QuasiMetricSpace, values: np.ndarray, rung: np.ndarray, cfg: LadderConfig,
             points=None) -> np.ndarray:
    """max of ``values`` over the forward ball of radius r_rung[p] around each centre, centre included."""
    X0 = _points(space, points)
    geom = _geometry(space, X0, cfg)
    vals = np.asarray(values, float)
    out = vals[X0].copy()
    rung = np.broadcast_to(np.asarray(rung), X0.shape)
    for b in geom.blocks:
        inside = b.bin >= rung[b.rows][b.row]
        np.maximum.at(out, b.rows.start + b.row[inside], vals[b.c[inside]])
        np.maximum.at(out, b.rows.start + b.zrow, vals[b.zc])
    return out
