"""How far a quasi-metric is from being symmetric.

Global index c (smallest backward/forward ratio), reversibility 1/c, the
pointwise index sigma read off a ball ladder, and a tier classification. The
tiers are estimates at the sampling resolution: a finite sample cannot
certify a limit property, so the ladder evidence travels with the verdict.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateSpace, EstimateUndefined
from .qspace import QuasiMetricSpace, iter_blocks
from .slope import DEFAULT_LADDER, LadderConfig, SlopeEstimate, ball_max, sigma_batch

TIERS = ("asymmetric", "pointwise_quasi_symmetric", "locally_quasi_symmetric",
         "uniformly_quasi_symmetric", "metric")
TIER_RANK = {name: i for i, name in enumerate(TIERS)}


def _index_with_witness(space: QuasiMetricSpace) -> tuple[float, tuple[int, int]]:
    best, where = math.inf, None
    n = space.n
    for rows in iter_blocks(n, n, budget=4_000_000):
        I = np.arange(rows.start, rows.stop)[:, None]
        J = np.arange(n)[None, :]
        fwd = space.pair(I, J)
        bwd = space.pair(J, I)
        ok = (fwd > 0) & np.isfinite(fwd)
        if not ok.any():
            continue
        with np.errstate(invalid="ignore", divide="ignore"):
            ratio = np.where(ok, bwd / np.where(ok, fwd, 1.0), np.inf)
        k = int(np.argmin(ratio))
        if ratio.flat[k] < best:
            i, j = divmod(k, n)
            best, where = float(ratio.flat[k]), (rows.start + i, j)
    if where is None:
        raise DegenerateSpace("no pair of points at positive finite distance")
    return best, where


def index_of_symmetry(space: QuasiMetricSpace) -> float:
    """min of d(y, x) / d(x, y) over pairs with 0 < d(x, y) < inf."""
    return _index_with_witness(space)[0]


def reversibility(space: QuasiMetricSpace) -> float:
    c = index_of_symmetry(space)
    return math.inf if c == 0 else 1.0 / c


def pointwise_sigma(space: QuasiMetricSpace, x0: int, cfg: LadderConfig = DEFAULT_LADDER) -> SlopeEstimate:
    """Ladder of sup d(x, x0) / d(x0, x) over forward balls at x0."""
    return sigma_batch(space, cfg, [x0]).at(0)


@dataclass(frozen=True)
class Thresholds:
    """``local_jump``: ratio between the largest sigma near x0 and
    max(sigma(x0), 1/sigma(x0)) that marks a point where sigma is not locally
    bounded. ``uniform_bound``: largest
    K_sup still called uniform (defaults to the ladder's divergence cap)."""

    local_jump: float = 2.0
    uniform_bound: float | None = None


@dataclass
class SymmetryReport:
    c: float
    lambda_: float
    sigma: list[SlopeEstimate]
    classification: str
    K_sup: float
    c_witness: tuple[int, int] | None = None
    local_sup: list[float] = field(default_factory=list)
    reason: str = ""

    def to_json(self) -> dict:
        return {
            "c": self.c,
            "lambda": self.lambda_,
            "classification": self.classification,
            "K_sup": self.K_sup,
            "c_witness": list(self.c_witness) if self.c_witness else None,
            "reason": self.reason,
            "local_sup": list(self.local_sup),
            "sigma": [s.to_json() for s in self.sigma],
        }


def classify_symmetry(space: QuasiMetricSpace, cfg: LadderConfig = DEFAULT_LADDER,
                      thresholds: Thresholds = Thresholds()) -> SymmetryReport:
    try:
        c, pair = _index_with_witness(space)
    except DegenerateSpace:
        c, pair = 1.0, None
    lam = math.inf if c == 0 else 1.0 / c

    if space.is_symmetric():
        batch = sigma_batch(space, cfg)
        return SymmetryReport(c, lam, batch.estimates(), "metric", float(batch.estimate.max(initial=0.0)),
                              pair, batch.estimate.tolist(), "distance is symmetric")

    try:
        batch = sigma_batch(space, cfg)
    except EstimateUndefined as exc:
        return SymmetryReport(c, lam, [], "asymmetric", math.inf, pair, [],
                              f"sigma undefined at point {exc.x0}: {exc}")
    est = batch.estimate
    sig = batch.estimates()
    bound = thresholds.uniform_bound if thresholds.uniform_bound is not None else cfg.divergence_cap
    blown = ~np.isfinite(est) | (est > cfg.divergence_cap)
    if blown.any():
        p = int(np.flatnonzero(blown)[0])
        return SymmetryReport(c, lam, sig, "asymmetric", math.inf, pair, [],
                              f"sigma is unbounded at point {int(batch.points[p])}")

    # sup of sigma over the ball one rung above each point's estimate rung
    rung = np.maximum(batch.K - 1, 0)
    near = ball_max(space, est, rung, cfg)
    K_sup = float(est.max(initial=0.0))
    # compare with the asymmetry magnitude at x0 so one-sided boundary points,
    # where sigma drops below 1, are not read as blow-ups
    pos = est > 0
    safe = np.where(pos, est, 1.0)
    jump = np.where(pos, near / np.maximum(safe, 1.0 / safe), 1.0)
    growing = np.flatnonzero(batch.diverging)
    if jump.max(initial=1.0) >= thresholds.local_jump:
        p = int(np.argmax(jump))
        cls = "pointwise_quasi_symmetric"
        reason = f"sigma finite everywhere but jumps by {jump[p]:.6g} near point {p}"
    elif growing.size == 0 and K_sup <= bound:
        cls, reason = "uniformly_quasi_symmetric", f"sup of sigma is {K_sup:.6g}"
    else:
        cls = "locally_quasi_symmetric"
        if growing.size:
            reason = f"sigma locally bounded but its ladder still grows at point {int(batch.points[growing[0]])}"
        else:
            reason = f"sigma locally bounded but sup {K_sup:.6g} exceeds {bound:.6g}"
    return SymmetryReport(c, lam, sig, cls, K_sup, pair, near.tolist(), reason)
