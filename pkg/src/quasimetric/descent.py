"""Descent modulus T[f] = SLip(-f) and the brute-force metric compatibility search."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NonpositiveK, PreconditionNotMet
from .qspace import QuasiMetricSpace
from .slope import DEFAULT_LADDER, LadderConfig, ScalarField, SlopeEstimate, check_field, slip_batch


def descent_modulus(space: QuasiMetricSpace, f: ScalarField, x0: int,
                    cfg: LadderConfig = DEFAULT_LADDER) -> SlopeEstimate:
    return slip_batch(space, -f, cfg, [x0], kind="descent_modulus").at(0)


@dataclass(frozen=True)
class CompatibilityWitness:
    x: int
    z: int
    f_gap: float
    g_gap: float
    theta_bound: float
    g_drop: float
    rho: float
    delta: float
    K: float
    satisfied: tuple[bool, bool]

    @property
    def ok(self) -> bool:
        return all(self.satisfied)

    def to_json(self) -> dict:
        return {
            "x": self.x, "z": self.z, "f_gap": self.f_gap, "g_gap": self.g_gap,
            "theta_bound": self.theta_bound, "g_drop": self.g_drop, "rho": self.rho,
            "delta": self.delta, "K": self.K, "satisfied": list(self.satisfied),
        }


@dataclass(frozen=True)
class NoWitness:
    """No z satisfies both conditions; ``best`` is the candidate closest to doing so."""

    best: CompatibilityWitness | None
    searched: int

    def to_json(self) -> dict:
        return {"witness": None, "searched": self.searched,
                "best": None if self.best is None else self.best.to_json()}


def evaluate_pair(space: QuasiMetricSpace, f: ScalarField, g: ScalarField, x: int, z: int,
                  delta: float, rho: float, K: float) -> CompatibilityWitness:
    """Both conditions for a single z, straight from the raw field values."""
    fv, gv = f.values, g.values
    f_gap = max(float(fv[x] - fv[z]), 0.0)
    g_gap = max(float(gv[x] - gv[z]), 0.0)
    D = max(space.d(x, z), space.d(z, x))
    theta = (delta / K) * D
    drop = float(gv[x] - gv[z])
    c1 = f_gap < (1 + rho) * g_gap
    c2 = theta < drop
    return CompatibilityWitness(int(x), int(z), f_gap, g_gap, theta, drop, rho, delta, K, (c1, c2))


def check_metric_compatibility(space: QuasiMetricSpace, f: ScalarField, g: ScalarField, x: int,
                               delta: float, rho: float, K: float | None = None,
                               cfg: LadderConfig = DEFAULT_LADDER, candidates=None):
    """Search z != x for f_gap < (1 + rho) g_gap and (delta / K) D(x, z) < g(x) - g(z).

    Requires T[f](x) < delta < T[g](x). D is the max-symmetrization; the
    inequalities are strict with no slack. ``K=None`` takes the largest
    pointwise symmetry index and refuses when that ladder diverges. Returns the
    lowest-index witness, or ``NoWitness`` carrying the best near miss.
    """
    check_field(space, f)
    check_field(space, g)
    if K is None:
        from .symmetry import classify_symmetry

        rep = classify_symmetry(space, cfg)
        if not math.isfinite(rep.K_sup) or any(s.diverging for s in rep.sigma):
            raise PreconditionNotMet("K_sup is not finite on this space; pass K explicitly")
        K = rep.K_sup
    if not K > 0:
        raise NonpositiveK(f"K must be positive, got {K}")

    tf = descent_modulus(space, f, x, cfg).estimate
    tg = descent_modulus(space, g, x, cfg).estimate
    if not (tf < delta < tg):
        raise PreconditionNotMet(
            f"need T[f](x) < delta < T[g](x); got T[f]={tf:.6g}, delta={delta:.6g}, T[g]={tg:.6g}"
        )

    zs = np.arange(space.n) if candidates is None else np.unique(np.asarray(candidates, dtype=np.int64))
    zs = zs[zs != x]
    fv, gv = f.values, g.values
    f_gap = np.maximum(fv[x] - fv[zs], 0.0)
    g_gap = np.maximum(gv[x] - gv[zs], 0.0)
    D = np.maximum(space.pair(np.full(zs.shape, x), zs), space.pair(zs, np.full(zs.shape, x)))
    theta = (delta / K) * D
    drop = gv[x] - gv[zs]
    c1 = f_gap < (1 + rho) * g_gap
    c2 = theta < drop
    hit = np.flatnonzero(c1 & c2)
    if hit.size:
        return evaluate_pair(space, f, g, x, int(zs[hit[0]]), delta, rho, K)
    if zs.size == 0:
        return NoWitness(None, 0)
    with np.errstate(invalid="ignore"):
        slack = np.minimum((1 + rho) * g_gap - f_gap, drop - theta)
    slack = np.where(np.isnan(slack), -np.inf, slack)
    b = int(np.argmax(slack))
    return NoWitness(evaluate_pair(space, f, g, x, int(zs[b]), delta, rho, K), int(zs.size))
