"""Finite Banach-Stone engine.

Functions on a finite space form the algebra R^n with pointwise product. An
order-preserving algebra isomorphism T between two such algebras must send
each indicator e_y to an indicator, so reading which row of T e_y carries the
1 recovers the point map tau with T f = f o tau.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import AsymmetricInput, DimensionMismatch, IsoCheckFailed, NotPointInduced
from .qspace import QuasiMetricSpace
from .slope import DEFAULT_LADDER, LadderConfig, ScalarField, slip_rungs_many

ATOL = 1e-9
N_RANDOM = 1000


@dataclass(frozen=True, eq=False)
class FunctionAlgebra:
    space: QuasiMetricSpace
    norm_kind: str = "C"
    ladder: LadderConfig = DEFAULT_LADDER

    def __post_init__(self):
        if self.norm_kind not in ("C", "D"):
            raise ValueError(f"norm_kind must be 'C' or 'D', got {self.norm_kind!r}")

    @property
    def n(self) -> int:
        return self.space.n

    @property
    def label(self) -> str:
        return self.space.label

    def norms(self, F: np.ndarray) -> np.ndarray:
        """Cone norm of every row of F. Rows with a negative entry are outside the cone: +inf."""
        F = np.atleast_2d(np.asarray(F, float))
        if F.shape[1] != self.n:
            from .errors import FieldSpaceMismatch

            raise FieldSpaceMismatch(f"fields have {F.shape[1]} values, algebra has {self.n} points")
        out = np.max(np.abs(F), axis=1, initial=0.0)
        if self.norm_kind == "D" and self.n > 0:
            # finite-scale semantics: the ladder estimate is used as is, whatever its trend
            batches = slip_rungs_many(self.space, F, self.ladder)
            slips = np.array([b.estimate.max(initial=0.0) for b in batches])
            out = np.maximum(out, slips)
        out[np.any(F < 0, axis=1)] = math.inf
        return out


def cone_norm(algebra: FunctionAlgebra, f) -> float:
    if isinstance(f, ScalarField):
        if f.space_label != algebra.label:
            from .errors import FieldSpaceMismatch

            raise FieldSpaceMismatch(f"field is bound to {f.space_label!r}, not {algebra.label!r}")
        f = f.values
    return float(algebra.norms(np.asarray(f, float)[None, :])[0])


@dataclass(frozen=True, eq=False)
class AlgebraOperator:
    """(T f)(x) = sum_y matrix[x, y] f(y): fields on the target space Y in, fields on X out."""

    matrix: np.ndarray
    source: str = "Y"
    target: str = "X"

    def __post_init__(self):
        M = np.array(self.matrix, dtype=float)
        if M.ndim != 2:
            raise DimensionMismatch("operator matrix must be two-dimensional")
        if not np.all(np.isfinite(M)):
            raise ValueError("operator entries must be finite")
        M.setflags(write=False)
        object.__setattr__(self, "matrix", M)

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    def __call__(self, f) -> np.ndarray:
        return self.matrix @ np.asarray(f, float)

    def apply_rows(self, F: np.ndarray) -> np.ndarray:
        return np.asarray(F, float) @ self.matrix.T


def compose_operator(tau, n_target: int, source: str = "Y", target: str = "X") -> AlgebraOperator:
    """Operator f -> f o tau for tau: X -> Y given as an index array."""
    tau = np.asarray(tau, dtype=np.int64)
    M = np.zeros((tau.size, n_target))
    M[np.arange(tau.size), tau] = 1.0
    return AlgebraOperator(M, source, target)


def averaging_operator(n: int) -> AlgebraOperator:
    return AlgebraOperator(np.full((n, n), 1.0 / n))


@dataclass
class IsoReport:
    multiplicative: bool
    unital: bool
    positive: bool
    bijective: bool
    norm_T: float | None = None
    norm_Tinv: float | None = None
    samples: int = 0
    violations: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.multiplicative and self.unital and self.positive and self.bijective

    def to_json(self) -> dict:
        return {
            "multiplicative": self.multiplicative, "unital": self.unital,
            "positive": self.positive, "bijective": self.bijective,
            "norm_T": self.norm_T, "norm_Tinv": self.norm_Tinv,
            "norm_samples": self.samples, "violations": self.violations,
        }


def _multiplicative_witness(M: np.ndarray, atol: float) -> dict | None:
    """T e_i . T e_j must equal T(e_i . e_j), i.e. delta_ij T e_i, on every basis pair."""
    nY = M.shape[1]
    cols = M.T
    for i, j in itertools.combinations(range(nY), 2):
        prod = cols[i] * cols[j]
        if np.max(np.abs(prod), initial=0.0) > atol:
            x = int(np.argmax(np.abs(prod)))
            return {"check": "multiplicative", "pair": [i, j], "point": x,
                    "T(e_i*e_j)": 0.0, "Te_i*Te_j": float(prod[x])}
    for i in range(nY):
        gap = cols[i] * cols[i] - cols[i]
        if np.max(np.abs(gap), initial=0.0) > atol:
            x = int(np.argmax(np.abs(gap)))
            return {"check": "multiplicative", "pair": [i, i], "point": x,
                    "T(e_i*e_j)": float(cols[i][x]), "Te_i*Te_j": float(cols[i][x] ** 2)}
    return None


def _operator_norm(T: AlgebraOperator, dom: FunctionAlgebra, cod: FunctionAlgebra,
                   rng: np.random.Generator, n_random: int) -> float:
    F = np.vstack([np.eye(dom.n), rng.random((n_random, dom.n))])
    num = cod.norms(T.apply_rows(F))
    den = dom.norms(F)
    ok = den > 0
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(ok, num / np.where(ok, den, 1.0), 0.0)
    return float(np.max(ratio, initial=0.0))


def verify_iso(T: AlgebraOperator, Tinv: AlgebraOperator | None, algY: FunctionAlgebra | None = None,
               algX: FunctionAlgebra | None = None, seed: int = 0, n_random: int = N_RANDOM,
               atol: float = ATOL) -> IsoReport:
    """Check that T: A(Y) -> A(X) is a unital, positive, bijective algebra isomorphism.

    Norms over the cone are sampled lower bounds (basis vectors plus
    ``n_random`` uniform nonnegative fields) and are skipped without algebras.
    """
    M = T.matrix
    nX, nY = M.shape
    if algY is not None and algY.n != nY:
        raise DimensionMismatch(f"T has {nY} columns but the domain algebra has {algY.n} points")
    if algX is not None and algX.n != nX:
        raise DimensionMismatch(f"T has {nX} rows but the codomain algebra has {algX.n} points")
    if Tinv is not None and Tinv.shape != (nY, nX):
        raise DimensionMismatch(f"inverse has shape {Tinv.shape}, expected {(nY, nX)}")

    violations = []
    w = _multiplicative_witness(M, atol)
    mult = w is None
    if w:
        violations.append(w)

    one = M @ np.ones(nY)
    unital = bool(np.max(np.abs(one - 1.0), initial=0.0) <= atol)
    if not unital:
        x = int(np.argmax(np.abs(one - 1.0)))
        violations.append({"check": "unital", "point": x, "T1": float(one[x])})

    rng = np.random.default_rng(seed)
    positive = True
    for name, A in (("T", M), ("Tinv", None if Tinv is None else Tinv.matrix)):
        if A is None:
            continue
        if A.min(initial=0.0) < -atol:
            x, y = np.unravel_index(int(np.argmin(A)), A.shape)
            violations.append({"check": "positive", "operator": name, "basis": int(y),
                               "point": int(x), "value": float(A[x, y])})
            positive = False
            continue
        probe = rng.random((64, A.shape[1])) @ A.T
        if probe.min(initial=0.0) < -atol:
            violations.append({"check": "positive", "operator": name, "random_field": True})
            positive = False

    bijective = nX == nY
    if bijective and Tinv is not None:
        Ti = Tinv.matrix
        e1 = np.max(np.abs(M @ Ti - np.eye(nX)), initial=0.0)
        e2 = np.max(np.abs(Ti @ M - np.eye(nY)), initial=0.0)
        bijective = bool(max(e1, e2) <= atol)
        if not bijective:
            violations.append({"check": "bijective", "max_error": float(max(e1, e2))})
    elif not bijective:
        violations.append({"check": "bijective", "shape": [nX, nY]})
    else:
        bijective = bool(np.linalg.matrix_rank(M) == nX)

    report = IsoReport(mult, unital, positive, bijective, violations=violations)
    if algY is not None and algX is not None:
        report.norm_T = _operator_norm(T, algY, algX, rng, n_random)
        if Tinv is not None:
            report.norm_Tinv = _operator_norm(Tinv, algX, algY, rng, n_random)
        report.samples = n_random + max(nX, nY)
    return report


def _inverse(T: AlgebraOperator) -> AlgebraOperator | None:
    M = T.matrix
    if M.shape[0] != M.shape[1]:
        return None
    try:
        return AlgebraOperator(np.linalg.inv(M), T.target, T.source)
    except np.linalg.LinAlgError:
        return None


def recover_tau(T: AlgebraOperator, Tinv: AlgebraOperator | None = None, force: bool = False,
                atol: float = ATOL) -> np.ndarray:
    """Point map tau with (T e_y)(x) = 1 exactly when tau(x) = y.

    Unless ``force`` is set the operator must first pass ``verify_iso``.
    """
    M = T.matrix
    if not force:
        inv = Tinv if Tinv is not None else _inverse(T)
        report = verify_iso(T, inv, atol=atol)
        if not report.passed:
            raise IsoCheckFailed(report)
    nX = M.shape[0]
    tau = np.empty(nX, dtype=np.int64)
    for x in range(nX):
        row = M[x]
        ones = np.flatnonzero(np.abs(row - 1.0) <= atol)
        rest = np.delete(np.abs(row), ones)
        if ones.size != 1 or rest.max(initial=0.0) > atol:
            raise NotPointInduced(x, [int(y) for y in ones])
        tau[x] = ones[0]
    return tau


@dataclass
class CompositionReport:
    max_deviation: float
    passed: bool
    witness: dict | None = None

    def to_json(self) -> dict:
        return {"max_deviation": self.max_deviation, "passed": self.passed, "witness": self.witness}


def verify_composition(T: AlgebraOperator, tau, fields, atol: float = ATOL) -> CompositionReport:
    """max over fields and points of |T f(x) - f(tau(x))|."""
    tau = np.asarray(tau, dtype=np.int64)
    F = np.atleast_2d(np.array([f.values if isinstance(f, ScalarField) else f for f in fields], dtype=float))
    dev = np.abs(T.apply_rows(F) - F[:, tau])
    if dev.size == 0:
        return CompositionReport(0.0, True)
    k = int(np.argmax(dev))
    s, x = divmod(k, dev.shape[1])
    worst = float(dev.flat[k])
    witness = None if worst <= atol else {"field": int(s), "point": int(x), "tau_x": int(tau[x]),
                                          "Tf": float(T.apply_rows(F[s:s + 1])[0, x]),
                                          "f_tau": float(F[s, tau[x]])}
    return CompositionReport(worst, worst <= atol, witness)


def multiplicative_functionals(n: int) -> list[np.ndarray]:
    """Every nonzero multiplicative linear functional on R^n, by exhaustive search.

    phi(e_i)^2 = phi(e_i) forces each value into {0, 1}, so {0, 1}^n is the
    complete candidate set; multiplicativity on pairs then leaves at most one 1.
    """
    found = []
    for bits in itertools.product((0.0, 1.0), repeat=n):
        v = np.array(bits)
        if not v.any():
            continue
        ok = all(v[i] * v[j] == (v[i] if i == j else 0.0) for i in range(n) for j in range(n))
        if ok:
            found.append(v)
    return found


@dataclass
class LipschitzBoundReport:
    lip_tau: float
    C: float
    norm_T: float
    bound: float
    passed: bool
    tight: bool
    worst_pair: tuple[int, int] | None

    def to_json(self) -> dict:
        return {"LIP_tau": self.lip_tau, "C": self.C, "norm_T": self.norm_T, "bound": self.bound,
                "passed": self.passed, "tight": self.tight,
                "worst_pair": list(self.worst_pair) if self.worst_pair else None}


def lipschitz_bound_check(space_X: QuasiMetricSpace, space_Y: QuasiMetricSpace, tau, norm_T: float,
                          atol: float = ATOL) -> LipschitzBoundReport:
    """LIP(tau) <= C ||T| with separation constant C = max(1, diam Y)."""
    for sp in (space_X, space_Y):
        if not sp.is_symmetric():
            raise AsymmetricInput(f"space {sp.label!r} is not symmetric")
    tau = np.asarray(tau, dtype=np.int64)
    if tau.size != space_X.n:
        raise DimensionMismatch(f"tau has {tau.size} entries for {space_X.n} points")
    DX = space_X.dist
    DY = space_Y.pair(tau[:, None], tau[None, :])
    ok = DX > 0
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(ok, DY / np.where(ok, DX, 1.0), 0.0)
    k = int(np.argmax(ratio))
    lip = float(ratio.flat[k])
    pair = divmod(k, space_X.n) if ok.any() else None
    C = max(1.0, space_Y.diameter())
    bound = C * norm_T
    return LipschitzBoundReport(lip, C, float(norm_T), bound, bool(lip <= bound + atol),
                                bool(abs(lip - bound) <= atol), None if pair is None else tuple(map(int, pair)))
