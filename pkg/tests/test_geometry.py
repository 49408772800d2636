import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_digraph
from oracles import r_path_ratio
from quasimetric import (
    Curve,
    bind,
    curve_length,
    curve_on,
    from_function,
    from_matrix,
    grid,
    path_quasimetric,
    quasiconvexity_constant,
    verify_length_lemma,
    verify_upper_gradient,
)
from quasimetric.errors import CurveSpaceMismatch, DegenerateSpace, StepExceedsRadius
from quasimetric.geometry import step_lengths


@pytest.fixture(scope="module")
def e():
    return grid("grid_euclidean", 0.0, 1.0, 0.1)


def test_curve_length_through_all_points(e):
    assert curve_length(e, curve_on(e, range(11))) == pytest.approx(1.0, abs=1e-12)


def test_curve_length_is_directional():
    s = grid("grid_du", 0.0, 1.0, 0.25)
    assert curve_length(s, curve_on(s, [0, 4])) == 1.0
    assert curve_length(s, curve_on(s, [4, 0])) == 0.0


def test_curve_repeats_and_join(e):
    c = curve_on(e, [0, 1, 1, 2])
    assert c.repeats == [1]
    joined = c + curve_on(e, [2, 3])
    assert joined.points == (0, 1, 1, 2, 3)


def test_curve_space_mismatch(e):
    other = grid("grid_du", 0.0, 1.0, 0.1)
    with pytest.raises(CurveSpaceMismatch):
        curve_length(other, curve_on(e, [0, 1]))
    with pytest.raises(CurveSpaceMismatch):
        curve_length(e, curve_on(e, [0, 99]))
    with pytest.raises(CurveSpaceMismatch):
        curve_on(e, [0]) + curve_on(other, [1])
    with pytest.raises(ValueError):
        Curve((), e.label)


def test_euclidean_quasiconvexity(e):
    rep = quasiconvexity_constant(e, 0.2)
    assert rep.K_estimate == pytest.approx(1.0, abs=1e-9)
    assert not rep.diverging
    assert len(rep.scales) == 3


def test_quasiconvexity_matches_oracle(rng):
    space = path_quasimetric(random_digraph(rng, 7, 0.6), 7)
    D = np.asarray(space.dist)
    r = float(np.median(D[D > 0]))
    rep = quasiconvexity_constant(space, r, n_scales=1)
    assert rep.K_estimate == pytest.approx(r_path_ratio(D, r), rel=1e-12)


def test_quasiconvexity_unreachable_is_diverging():
    s = grid("grid_euclidean", 0.0, 1.0, 0.25)
    rep = quasiconvexity_constant(s, 0.1, n_scales=1)
    assert rep.K_estimate == math.inf and rep.diverging


def test_snowflake_constant_grows():
    Ks = []
    for h in (1e-2, 2.5e-3):
        rep = quasiconvexity_constant(grid("grid_snowflake", 0.0, 1.0, h), 2 * math.sqrt(h))
        assert rep.diverging
        Ks.append(rep.K_estimate)
    assert Ks[1] >= 1.3 * Ks[0]


def test_quasiconvexity_input_errors(e):
    with pytest.raises(ValueError):
        quasiconvexity_constant(e, 0.0)
    with pytest.raises(DegenerateSpace):
        quasiconvexity_constant(from_matrix([[0.0]]), 1.0)


def test_length_lemma_identity_is_tight():
    s = grid("grid_euclidean", 0.0, 1.0, 0.01)
    rep = verify_length_lemma(s, from_function(s, lambda x: x), curve_on(s, range(s.n)))
    assert rep.lhs == pytest.approx(1.0) and rep.rhs == pytest.approx(1.0)
    assert 0 <= rep.margin <= 1e-9 and rep.passed


def test_length_lemma_step_function():
    s = grid("grid_euclidean", -1.0, 1.0, 0.01)
    f = from_function(s, lambda x: (x >= 0).astype(float))
    rep = verify_length_lemma(s, f, curve_on(s, range(90, 111)))
    assert rep.lhs == 1.0 and rep.passed
    # the rung next to the jump is about 1/r
    assert rep.detail["slip_rung_max"] >= 1 / (2 * rep.radius)


def test_length_lemma_explicit_radius(e):
    f = from_function(e, lambda x: x)
    c = curve_on(e, range(11))
    with pytest.raises(StepExceedsRadius) as exc:
        verify_length_lemma(e, f, c, radius=0.1)
    steps = step_lengths(e, c)
    assert exc.value.length == steps.max() == steps[exc.value.step]
    assert verify_length_lemma(e, f, c, radius=0.15).passed


def test_step_exceeds_ladder(e):
    f = from_function(e, lambda x: x)
    with pytest.raises(StepExceedsRadius):
        verify_length_lemma(e, f, curve_on(e, [0, 10]))


def test_upper_gradient_square():
    s = grid("grid_euclidean", 0.0, 1.0, 0.01)
    rep = verify_upper_gradient(s, from_function(s, lambda x: x**2), curve_on(s, range(s.n)))
    riemann = float(np.sum(2 * s.coords[1:]) * 0.01)
    assert rep.passed
    assert abs(rep.rhs - riemann) / riemann <= 0.02


def test_upper_gradient_decreasing_field():
    s = grid("grid_euclidean", 0.0, 1.0, 0.01)
    rep = verify_upper_gradient(s, from_function(s, lambda x: -x), curve_on(s, range(s.n)))
    assert rep.lhs == pytest.approx(1.0) and rep.rhs == pytest.approx(1.0)


def test_upper_gradient_on_asymmetric_space():
    s = grid("grid_rho_alpha", 0.0, 1.0, 0.01, alpha=2.0)
    f = from_function(s, np.sin)
    rep = verify_upper_gradient(s, f, curve_on(s, list(range(0, 60)) + list(range(60, 20, -1))))
    assert rep.passed


def test_step_lengths(e):
    np.testing.assert_allclose(step_lengths(e, curve_on(e, [0, 2, 1])), [0.2, 0.1])


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 100_000))
def test_telescoping_bounds_property(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(4, 10))
    space = path_quasimetric(random_digraph(rng, n, 0.7), n)
    D = np.asarray(space.dist)
    lim = space.diameter() / 4
    ok = (np.maximum(D, D.T) < lim) & ~np.eye(n, dtype=bool)
    pts = [int(rng.integers(n))]
    for _ in range(8):
        nb = np.flatnonzero(ok[pts[-1]])
        if nb.size == 0:
            break
        pts.append(int(rng.choice(nb)))
    f = bind(space, rng.normal(size=n))
    c = curve_on(space, pts)
    assert verify_length_lemma(space, f, c).margin >= -1e-9
    assert verify_upper_gradient(space, f, c).margin >= -1e-9
