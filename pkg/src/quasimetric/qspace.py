"""Finite quasi-metric spaces.

A space is either backed by a dense distance matrix or by a *kernel*: a small
object that evaluates d(i, j) on demand and can bound every open ball by a
contiguous index window. Kernels let 1-D grids with hundreds of thousands of
points run through the slope ladders without ever materialising n x n storage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Iterator, Sequence

import numpy as np
from scipy.sparse.csgraph import csgraph_from_dense, shortest_path

from .errors import (
    InvalidRecipe,
    NegativeWeight,
    SeparationViolation,
    TriangleViolation,
)

TRIANGLE_TOL = 1e-9

GRID_KINDS = ("grid_euclidean", "grid_du", "grid_rho_alpha", "grid_snowflake", "grid_randers")
RECIPE_KINDS = ("matrix", "digraph", *GRID_KINDS, "wedge_union", "interval_union")


# --------------------------------------------------------------------------- kernels


class Kernel:
    """Lazy distance evaluator. Subclasses override ``pair`` and the window methods."""

    n: int

    def pair(self, I: np.ndarray, J: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def forward_window(self, I: np.ndarray, r: float) -> tuple[np.ndarray, np.ndarray]:
        """Half-open index ranges [lo, hi) containing every j with d(i, j) < r."""
        I = np.asarray(I)
        return np.zeros(I.shape, dtype=np.int64), np.full(I.shape, self.n, dtype=np.int64)

    def backward_window(self, I: np.ndarray, r: float) -> tuple[np.ndarray, np.ndarray]:
        I = np.asarray(I)
        return np.zeros(I.shape, dtype=np.int64), np.full(I.shape, self.n, dtype=np.int64)

    def diameter(self) -> float:
        return _dense_diameter(self.dense())

    def dense(self) -> np.ndarray:
        idx = np.arange(self.n)
        return self.pair(idx[:, None], idx[None, :])


class DenseKernel(Kernel):
    def __init__(self, dist: np.ndarray):
        self.d = dist
        self.n = dist.shape[0]

    def pair(self, I, J):
        return self.d[I, J]

    def dense(self):
        return self.d


class Grid1DKernel(Kernel):
    """Base for kernels on sorted 1-D coordinates; windows come from coordinate bounds."""

    def __init__(self, x: np.ndarray):
        self.x = x
        self.n = x.size

    def _fwd_bounds(self, x0: np.ndarray, r: float) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def _bwd_bounds(self, x0: np.ndarray, r: float) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def _to_index(self, lo: np.ndarray, hi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        # one index of slack on either side absorbs rounding in the inverses
        ilo = np.searchsorted(self.x, lo, side="left") - 1
        ihi = np.searchsorted(self.x, hi, side="right") + 1
        return np.clip(ilo, 0, self.n).astype(np.int64), np.clip(ihi, 0, self.n).astype(np.int64)

    def forward_window(self, I, r):
        return self._to_index(*self._fwd_bounds(self.x[np.asarray(I)], r))

    def backward_window(self, I, r):
        return self._to_index(*self._bwd_bounds(self.x[np.asarray(I)], r))

    def diameter(self) -> float:
        ends = np.array([0, self.n - 1])
        return float(np.max(self.pair(ends[:, None], ends[None, :])))


class EuclideanKernel(Grid1DKernel):
    def pair(self, I, J):
        return np.abs(self.x[J] - self.x[I])

    def _fwd_bounds(self, x0, r):
        return x0 - r, x0 + r

    _bwd_bounds = _fwd_bounds


class UpperKernel(Grid1DKernel):
    """d_u(x, y) = max(y - x, 0)."""

    def pair(self, I, J):
        return np.maximum(self.x[J] - self.x[I], 0.0)

    def _fwd_bounds(self, x0, r):
        return np.full_like(x0, -np.inf), x0 + r

    def _bwd_bounds(self, x0, r):
        return x0 - r, np.full_like(x0, np.inf)


class RhoAlphaKernel(Grid1DKernel):
    """alpha * (y - x) going up, x - y going down."""

    def __init__(self, x, alpha: float):
        super().__init__(x)
        self.alpha = alpha

    def pair(self, I, J):
        diff = self.x[J] - self.x[I]
        return np.where(diff >= 0, self.alpha * diff, -diff)

    def _fwd_bounds(self, x0, r):
        return x0 - r, x0 + r / self.alpha

    def _bwd_bounds(self, x0, r):
        return x0 - r / self.alpha, x0 + r


class SnowflakeKernel(Grid1DKernel):
    def pair(self, I, J):
        return np.sqrt(np.abs(self.x[J] - self.x[I]))

    def _fwd_bounds(self, x0, r):
        return x0 - r * r, x0 + r * r

    _bwd_bounds = _fwd_bounds


def randers_phi(x):
    """Antiderivative of t^2 / (1 + t^2) vanishing at 0."""
    return x - np.arctan(x)


class RandersKernel(Grid1DKernel):
    def __init__(self, x):
        super().__init__(x)
        self.atan = np.arctan(x)

    def pair(self, I, J):
        xi, xj = self.x[I], self.x[J]
        ai, aj = self.atan[I], self.atan[J]
        up = aj - ai
        down = 2.0 * (xi - xj) - (ai - aj)
        return np.where(xj >= xi, np.maximum(up, 0.0), np.maximum(down, 0.0))

    def _fwd_bounds(self, x0, r):
        top = np.arctan(x0) + r
        hi = np.where(top < math.pi / 2, np.tan(np.minimum(top, math.pi / 2 - 1e-15)), np.inf)
        return x0 - r, hi

    def _bwd_bounds(self, x0, r):
        bot = np.arctan(x0) - r
        lo = np.where(bot > -math.pi / 2, np.tan(np.maximum(bot, -math.pi / 2 + 1e-15)), -np.inf)
        return lo, x0 + r


class ReversedKernel(Kernel):
    def __init__(self, base: Kernel):
        self.base = base
        self.n = base.n

    def pair(self, I, J):
        return self.base.pair(J, I)

    def forward_window(self, I, r):
        return self.base.backward_window(I, r)

    def backward_window(self, I, r):
        return self.base.forward_window(I, r)

    def diameter(self):
        return self.base.diameter()


class SymmetrizedKernel(Kernel):
    def __init__(self, base: Kernel, mode: str):
        self.base = base
        self.mode = mode
        self.n = base.n

    def pair(self, I, J):
        a = self.base.pair(I, J)
        b = self.base.pair(J, I)
        if self.mode == "max":
            return np.maximum(a, b)
        return (a + b) / 2.0

    def forward_window(self, I, r):
        # d^s < r forces both one-sided distances below r (max) or below 2r (avg)
        rr = r if self.mode == "max" else 2.0 * r
        flo, fhi = self.base.forward_window(I, rr)
        blo, bhi = self.base.backward_window(I, rr)
        lo = np.maximum(flo, blo)
        return lo, np.maximum(np.minimum(fhi, bhi), lo)

    backward_window = forward_window

    def diameter(self):
        if isinstance(self.base, Grid1DKernel):
            ends = np.array([0, self.n - 1])
            return float(np.max(self.pair(ends[:, None], ends[None, :])))
        return super().diameter()


def _dense_diameter(d: np.ndarray) -> float:
    finite = d[np.isfinite(d)]
    return float(finite.max()) if finite.size else 0.0


# --------------------------------------------------------------------------- space


@dataclass(frozen=True, eq=False)
class QuasiMetricSpace:
    """Immutable finite quasi-metric space.

    ``dist`` is materialised lazily for kernel-backed spaces; estimators use
    ``pair``/``row``/``col`` and the ball windows instead.
    """

    kernel: Kernel
    label: str = "space"
    coords: np.ndarray | None = None
    meta: dict = field(default_factory=dict)
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n(self) -> int:
        return self.kernel.n

    @property
    def dist(self) -> np.ndarray:
        if "dist" not in self._cache:
            d = np.array(self.kernel.dense(), dtype=float, copy=True)
            d.setflags(write=False)
            self._cache["dist"] = d
        return self._cache["dist"]

    @property
    def is_dense(self) -> bool:
        return isinstance(self.kernel, DenseKernel)

    def pair(self, I, J) -> np.ndarray:
        return self.kernel.pair(np.asarray(I), np.asarray(J))

    def d(self, i: int, j: int) -> float:
        return float(self.kernel.pair(np.array(i), np.array(j)))

    def row(self, i: int) -> np.ndarray:
        return self.kernel.pair(np.array(i), np.arange(self.n))

    def col(self, j: int) -> np.ndarray:
        return self.kernel.pair(np.arange(self.n), np.array(j))

    def diameter(self) -> float:
        if "diam" not in self._cache:
            self._cache["diam"] = self.kernel.diameter()
        return self._cache["diam"]

    def forward_window(self, I, r):
        return self.kernel.forward_window(np.asarray(I), r)

    def backward_window(self, I, r):
        return self.kernel.backward_window(np.asarray(I), r)

    def is_symmetric(self, tol: float = 1e-9) -> bool:
        if "symmetric" not in self._cache:
            if isinstance(self.kernel, (EuclideanKernel, SnowflakeKernel)):
                sym = True
            elif isinstance(self.kernel, SymmetrizedKernel):
                sym = True
            elif isinstance(self.kernel, RhoAlphaKernel):
                sym = abs(self.kernel.alpha - 1.0) <= tol or self.n < 2
            elif isinstance(self.kernel, (UpperKernel, RandersKernel)):
                sym = self.n < 2
            else:
                D = self.dist
                both_inf = np.isinf(D) & np.isinf(D.T)
                with np.errstate(invalid="ignore"):
                    gap = np.abs(D - D.T)
                sym = bool(np.all(both_inf | (gap <= tol)))
            self._cache["symmetric"] = sym
        return self._cache["symmetric"]

    def with_label(self, label: str) -> "QuasiMetricSpace":
        return QuasiMetricSpace(self.kernel, label, self.coords, dict(self.meta))

    def to_json(self) -> dict:
        from .report import encode_matrix

        if "recipe" in self.meta:
            return dict(self.meta["recipe"])
        return {"kind": "matrix", "dist": encode_matrix(self.dist), "label": self.label}


def from_matrix(dist, label: str = "matrix", coords=None, validate: bool = True) -> QuasiMetricSpace:
    D = np.array(dist, dtype=float)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise InvalidRecipe(f"distance matrix must be square, got shape {D.shape}")
    if np.any(np.isnan(D)):
        raise InvalidRecipe("distance matrix contains NaN")
    if np.any(D < 0):
        raise InvalidRecipe("distance matrix has negative entries")
    if np.any(np.diag(D) != 0):
        raise InvalidRecipe("distance matrix must have a zero diagonal")
    if validate:
        validate_matrix(D)
    D.setflags(write=False)
    space = QuasiMetricSpace(DenseKernel(D), label, None if coords is None else np.asarray(coords, float))
    return space


def validate_matrix(D: np.ndarray, tol: float = TRIANGLE_TOL) -> None:
    """Raise on separation or triangle failures; the triangle report names the worst triple."""
    n = D.shape[0]
    zero = (D == 0) & (D.T == 0)
    np.fill_diagonal(zero, False)
    if zero.any():
        i, j = np.argwhere(zero)[0]
        raise SeparationViolation(int(i), int(j))
    worst = (0.0, None)
    with np.errstate(invalid="ignore"):
        for j in range(n):
            via = D[:, j][:, None] + D[j, :][None, :]
            excess = D - via
            excess = np.where(np.isnan(excess), -np.inf, excess)
            k = int(np.argmax(excess))
            val = excess.flat[k]
            if val > worst[0]:
                i, kk = divmod(k, n)
                worst = (float(val), (i, j, kk))
    if worst[1] is not None and worst[0] > tol:
        raise TriangleViolation(worst[1], worst[0])


def path_quasimetric(edges: Iterable[Sequence], n: int, label: str = "digraph") -> QuasiMetricSpace:
    """Shortest directed path distances; unreachable pairs are +inf."""
    W = np.full((n, n), np.inf)
    for e in edges:
        s, t, w = int(e[0]), int(e[1]), float(e[2])
        if not (0 <= s < n and 0 <= t < n):
            raise InvalidRecipe(f"edge ({s},{t}) references a node outside 0..{n - 1}")
        if w < 0 or math.isnan(w):
            raise NegativeWeight(f"edge ({s},{t}) has weight {w}")
        if s != t:
            W[s, t] = min(W[s, t], w)
    G = csgraph_from_dense(W, null_value=np.inf)
    D = shortest_path(G, method="D", directed=True)
    np.fill_diagonal(D, 0.0)
    zero = (D == 0) & (D.T == 0)
    np.fill_diagonal(zero, False)
    if zero.any():
        i, j = np.argwhere(zero)[0]
        raise SeparationViolation(int(i), int(j))
    D.setflags(write=False)
    return QuasiMetricSpace(DenseKernel(D), label)


def reverse(space: QuasiMetricSpace) -> QuasiMetricSpace:
    k = space.kernel
    base = k.base if isinstance(k, ReversedKernel) else ReversedKernel(k)
    return QuasiMetricSpace(base, f"reverse({space.label})", space.coords)


def symmetrize(space: QuasiMetricSpace, mode: str = "max") -> QuasiMetricSpace:
    if mode not in ("max", "avg"):
        raise ValueError(f"mode must be 'max' or 'avg', got {mode!r}")
    k = space.kernel
    if isinstance(k, ReversedKernel):
        k = k.base
    return QuasiMetricSpace(SymmetrizedKernel(k, mode), f"sym_{mode}({space.label})", space.coords)


def blend(space: QuasiMetricSpace, t: float) -> QuasiMetricSpace:
    """(1 - t) d + t d^s; a convex combination of quasi-metrics is again one."""
    if not 0 <= t <= 1:
        raise ValueError(f"blend parameter must lie in [0, 1], got {t}")
    D = space.dist
    S = np.maximum(D, D.T)
    with np.errstate(invalid="ignore"):
        B = np.where(np.isinf(D) | np.isinf(S), np.maximum(D, S), (1 - t) * D + t * S)
    return from_matrix(B, f"blend({space.label},{t:g})", space.coords, validate=False)


def forward_ball(space: QuasiMetricSpace, x0: int, r: float) -> np.ndarray:
    if not r > 0:
        raise ValueError("radius must be positive")
    lo, hi = space.forward_window(np.array([x0]), r)
    idx = np.arange(lo[0], hi[0])
    d = space.pair(np.full(idx.shape, x0), idx)
    return idx[(d < r) & (idx != x0)]


def backward_ball(space: QuasiMetricSpace, x0: int, r: float) -> np.ndarray:
    if not r > 0:
        raise ValueError("radius must be positive")
    lo, hi = space.backward_window(np.array([x0]), r)
    idx = np.arange(lo[0], hi[0])
    d = space.pair(idx, np.full(idx.shape, x0))
    return idx[(d < r) & (idx != x0)]


# --------------------------------------------------------------------------- recipes


@dataclass(frozen=True)
class SpaceRecipe:
    kind: str
    params: dict = field(default_factory=dict)

    @classmethod
    def from_json(cls, obj: dict) -> "SpaceRecipe":
        if not isinstance(obj, dict) or "kind" not in obj:
            raise InvalidRecipe("recipe must be an object with a 'kind' field")
        kind = obj["kind"]
        params = dict(obj.get("params", {}))
        if kind == "matrix" and "dist" in obj:
            params["dist"] = obj["dist"]
        if "label" in obj:
            params.setdefault("label", obj["label"])
        return cls(kind, params)

    def to_json(self) -> dict:
        from .report import jsonable

        return {"kind": self.kind, "params": jsonable(self.params)}


def grid_points(a: float, b: float, h: float) -> np.ndarray:
    if not (h > 0):
        raise InvalidRecipe(f"step h must be positive, got {h}")
    if not (a < b):
        raise InvalidRecipe(f"need a < b, got a={a}, b={b}")
    steps = (b - a) / h
    m = round(steps)
    if abs(steps - m) > 1e-6 * max(1.0, steps):
        raise InvalidRecipe(f"(b - a) / h = {steps} is not an integer")
    return np.linspace(a, b, m + 1)


def wedge_index(branch: int, k: int, per_branch: int) -> int:
    """Flat index of the k-th sample (k >= 1) on branch ``branch`` (1-based); 0 is the origin."""
    if k == 0:
        return 0
    return 1 + (branch - 1) * per_branch + (k - 1)


def wedge_matrix(N: int, step: float, per_branch: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n = 1 + N * per_branch
    branch = np.zeros(n, dtype=np.int64)
    pos = np.zeros(n)
    for b in range(1, N + 1):
        for k in range(1, per_branch + 1):
            i = wedge_index(b, k, per_branch)
            branch[i] = b
            pos[i] = k * step
    bi, bj = branch[:, None], branch[None, :]
    pi, pj = pos[:, None], pos[None, :]
    same = (bi == bj) | (bi == 0) | (bj == 0)
    nb = np.maximum(bi, bj)  # branch carrying the pair when one end is the origin
    within = np.where(pj >= pi, nb * (pj - pi), pi - pj)
    across = pi + bj * pj
    D = np.where(same, within, across)
    np.fill_diagonal(D, 0.0)
    return D, branch, pos


def interval_union_matrix(N: int, per_interval: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Samples of N unit intervals I_n = (2n, 2n + 1); cross distances 1 going up, n going down."""
    which = np.repeat(np.arange(1, N + 1), per_interval)
    offs = np.tile(np.arange(1, per_interval + 1) / (per_interval + 1), N)
    x = 2.0 * which + offs
    wi, wj = which[:, None], which[None, :]
    D = np.where(wi == wj, np.abs(x[:, None] - x[None, :]), np.where(wi < wj, 1.0, wi.astype(float)))
    D = np.broadcast_to(D, (x.size, x.size)).astype(float)
    return D, which, x


def _num(params: dict, key: str, default=None) -> float:
    if key not in params:
        if default is None:
            raise InvalidRecipe(f"missing parameter {key!r}")
        return default
    try:
        return float(params[key])
    except (TypeError, ValueError):
        raise InvalidRecipe(f"parameter {key!r} must be numeric") from None


def build_space(recipe: SpaceRecipe | dict) -> QuasiMetricSpace:
    if isinstance(recipe, dict):
        recipe = SpaceRecipe.from_json(recipe)
    kind, p = recipe.kind, recipe.params
    label = str(p.get("label", kind))
    meta = {"recipe": recipe.to_json(), "kind": kind}

    if kind == "matrix":
        from .report import decode_matrix

        if "dist" not in p:
            raise InvalidRecipe("matrix recipe needs 'dist'")
        try:
            D = decode_matrix(p["dist"])
        except (TypeError, ValueError) as exc:
            raise InvalidRecipe(f"bad matrix: {exc}") from None
        s = from_matrix(D, label)
        return QuasiMetricSpace(s.kernel, label, None, meta)

    if kind == "digraph":
        if "n" not in p or "edges" not in p:
            raise InvalidRecipe("digraph recipe needs 'n' and 'edges'")
        s = path_quasimetric(p["edges"], int(p["n"]), label)
        return QuasiMetricSpace(s.kernel, label, None, meta)

    if kind in GRID_KINDS:
        a, b, h = _num(p, "a"), _num(p, "b"), _num(p, "h")
        x = grid_points(a, b, h)
        if kind == "grid_euclidean":
            kern: Kernel = EuclideanKernel(x)
        elif kind == "grid_du":
            kern = UpperKernel(x)
        elif kind == "grid_rho_alpha":
            alpha = _num(p, "alpha")
            if not alpha > 0:
                raise InvalidRecipe(f"alpha must be positive, got {alpha}")
            kern = RhoAlphaKernel(x, alpha)
        elif kind == "grid_snowflake":
            kern = SnowflakeKernel(x)
        else:
            kern = RandersKernel(x)
        meta["h"] = h
        return QuasiMetricSpace(kern, label, x, meta)

    if kind == "wedge_union":
        N = int(_num(p, "N"))
        if N < 1:
            raise InvalidRecipe("wedge_union needs N >= 1")
        step = _num(p, "branch_step")
        if not step > 0:
            raise InvalidRecipe("branch_step must be positive")
        if "points_per_branch" in p:
            m = int(p["points_per_branch"])
        else:
            length = _num(p, "branch_length", 1.0)
            m = round(length / step)
        if m < 1:
            raise InvalidRecipe("each branch needs at least one point")
        D, branch, pos = wedge_matrix(N, step, m)
        meta.update(branch=branch, pos=pos, per_branch=m, h=step)
        return QuasiMetricSpace(DenseKernel(_frozen(D)), label, None, meta)

    if kind == "interval_union":
        N = int(_num(p, "N"))
        if N < 1:
            raise InvalidRecipe("interval_union needs N >= 1")
        m = int(_num(p, "points_per_interval", 21))
        if m < 1:
            raise InvalidRecipe("points_per_interval must be positive")
        D, which, x = interval_union_matrix(N, m)
        meta.update(interval=which)
        return QuasiMetricSpace(DenseKernel(_frozen(D)), label, x, meta)

    raise InvalidRecipe(f"unknown space kind {kind!r}; expected one of {', '.join(RECIPE_KINDS)}")


def _frozen(D: np.ndarray) -> np.ndarray:
    D = np.ascontiguousarray(D, dtype=float)
    D.setflags(write=False)
    return D


def grid(kind: str, a: float, b: float, h: float, **extra: Any) -> QuasiMetricSpace:
    """Shorthand for the 1-D grid recipes."""
    return build_space(SpaceRecipe(kind, {"a": a, "b": b, "h": h, **extra}))


def iter_blocks(n: int, width: int, budget: int = 2_000_000) -> Iterator[slice]:
    step = max(1, budget // max(1, width))
    for s in range(0, n, step):
        yield slice(s, min(n, s + step))
