import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_digraph
from oracles import lip_ladder, slip_ladder
from quasimetric import (
    LadderConfig,
    ascent_slope_at,
    bind,
    descent_modulus,
    descent_slope_at,
    from_function,
    grid,
    lip_at,
    path_quasimetric,
    separation_field,
    slip_at,
    slip_sup,
    truncated_distance_field,
    verify_constant_ordering,
    verify_lip_decomposition,
)
from quasimetric.errors import EmptySet, EstimateUndefined, FieldSpaceMismatch, SetsNotSeparated
from quasimetric.slope import ScalarField, lip_batch, sigma_batch, slip_batch


def kink(x):
    return np.where(x <= 0, -2 * x, -x)


def step(x):
    return (x >= 0).astype(float)


@pytest.fixture(scope="module")
def e1():
    return grid("grid_euclidean", -1.0, 1.0, 1e-3)


def at(space, x):
    return int(np.argmin(np.abs(space.coords - x)))


# --------------------------------------------------------------------------- against the ladder oracle


@pytest.mark.parametrize("which", ["small_quasi", "small_metric"])
def test_slip_ladder_matches_oracle(which, request, rng):
    space = request.getfixturevalue(which)
    space = space[0] if isinstance(space, tuple) else space
    D = np.asarray(space.dist)
    for _ in range(5):
        f = rng.normal(size=space.n)
        batch = slip_batch(space, bind(space, f))
        for p in range(space.n):
            L = int(batch.length[p])
            want = slip_ladder(D, f, p, batch.radii[:L])
            assert [s for s, _ in want] == batch.s[p, :L].tolist()
            assert [m for _, m in want] == batch.m[p, :L].tolist()


def test_lip_ladder_matches_oracle(small_quasi, rng):
    space, _ = small_quasi
    D = np.asarray(space.dist)
    f = rng.normal(size=space.n)
    batch = lip_batch(space, bind(space, f))
    assert batch.symmetrized
    for p in range(space.n):
        L = int(batch.length[p])
        want = lip_ladder(D, f, p, batch.radii[:L])
        np.testing.assert_array_equal([s for s, _ in want], batch.s[p, :L])


def test_estimate_reads_deepest_usable_rung(small_metric, rng):
    f = bind(small_metric, rng.normal(size=small_metric.n))
    e = slip_at(small_metric, f, 0)
    usable = [k for k, g in enumerate(e.ladder) if g.m >= 3]
    k = usable[-1] if usable else max(k for k, g in enumerate(e.ladder) if g.m > 0)
    assert e.usable == k and e.estimate == e.ladder[k].s


def test_fixed_rung_count_is_respected(small_metric, rng):
    f = bind(small_metric, rng.normal(size=small_metric.n))
    e = slip_at(small_metric, f, 2, LadderConfig(r0=2.0, n_rungs=5))
    assert len(e.ladder) == 5
    assert e.radii.tolist() == [2.0, 1.0, 0.5, 0.25, 0.125]


def test_ball_sups_are_nonincreasing(e1):
    f = from_function(e1, np.sin)
    e = slip_at(e1, f, at(e1, 0.3))
    assert np.all(np.diff(e.s) <= 0)
    assert all(a.m >= b.m for a, b in zip(e.ladder, e.ladder[1:]))


# --------------------------------------------------------------------------- closed forms


def test_identity_slip_is_one_everywhere():
    s = grid("grid_euclidean", 0.0, 1.0, 1e-3)
    b = slip_batch(s, from_function(s, lambda x: x))
    np.testing.assert_allclose(b.estimate[:-1], 1.0, atol=0.01)


def test_square_at_one():
    s = grid("grid_euclidean", 0.0, 2.0, 1e-3)
    f = from_function(s, lambda x: x**2)
    assert slip_at(s, f, 1000).estimate == pytest.approx(2, abs=0.01)
    assert lip_at(s, f, 1000).estimate == pytest.approx(2, abs=0.01)


def test_kink_slopes(e1):
    g = from_function(e1, kink)
    i = at(e1, 0.0)
    assert slip_at(e1, g, i).estimate == pytest.approx(2, abs=0.01)
    assert ascent_slope_at(e1, g, i).estimate == pytest.approx(2, abs=0.01)
    assert descent_slope_at(e1, g, i).estimate == pytest.approx(1, abs=0.01)
    assert lip_at(e1, g, i).estimate == pytest.approx(2, abs=0.01)


def test_step_function(e1):
    f = from_function(e1, step)
    e = slip_at(e1, f, at(e1, -0.5))
    assert e.estimate == 0.0 and not e.diverging
    assert lip_at(e1, f, at(e1, 0.0)).diverging
    # from the left of the jump the function rises: SLip blows up
    assert slip_at(e1, f, at(e1, -1e-3)).diverging


def test_tail_one_sided():
    s = grid("grid_euclidean", -1.0, 1.0, 1e-4)
    f = from_function(s, lambda x: np.where(x <= 0, 0.0, -np.sqrt(np.maximum(x, 0))))
    i = at(s, 0.0)
    assert ascent_slope_at(s, f, i).estimate == 0.0
    assert descent_slope_at(s, f, i).diverging


def test_constant_field_is_zero(small_quasi):
    space, _ = small_quasi
    f = bind(space, np.full(space.n, 3.5))
    for fn in (slip_batch, lip_batch):
        b = fn(space, f)
        assert np.all(b.estimate == 0) and not b.diverging.any()


def test_descent_modulus_on_rho2():
    s = grid("grid_rho_alpha", -1.0, 1.0, 0.01, alpha=2.0)
    i = at(s, 0.0)
    assert descent_modulus(s, from_function(s, lambda x: x), i).estimate == pytest.approx(1, abs=0.01)
    assert descent_modulus(s, from_function(s, lambda x: 2 * x), i).estimate == pytest.approx(2, abs=0.01)


def test_sigma_on_rho2_interior():
    s = grid("grid_rho_alpha", -1.0, 1.0, 0.01, alpha=2.0)
    b = sigma_batch(s, points=[at(s, 0.0)])
    assert b.estimate[0] == pytest.approx(2.0, abs=1e-12)


def test_slip_on_du_upper_line():
    s = grid("grid_du", 0.0, 1.0, 0.01)
    f = from_function(s, lambda x: x)
    # rising to the right costs exactly the rise, left points are free but lower
    assert slip_at(s, f, 50).estimate == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(EstimateUndefined):
        slip_at(s, from_function(s, lambda x: -x), 50)


def test_isolated_point_has_zero_estimate():
    s = path_quasimetric([(0, 1, 1.0), (1, 0, 1.0)], 2)
    e = slip_at(s, bind(s, [0.0, 5.0]), 0, LadderConfig(r0=0.5))
    assert e.estimate == 0.0 and e.usable is None


def test_slip_sup_infinite_when_diverging(e1):
    assert slip_sup(e1, from_function(e1, step)) == math.inf


# --------------------------------------------------------------------------- fields


def test_field_validation(e1):
    other = grid("grid_du", 0.0, 1.0, 0.5)
    with pytest.raises(FieldSpaceMismatch):
        slip_at(e1, bind(other, [0, 1, 2]), 0)
    with pytest.raises(FieldSpaceMismatch):
        bind(e1, np.zeros(3))
    with pytest.raises(ValueError):
        bind(other, [0, np.nan, 1])


def test_field_values_read_only(e1):
    f = from_function(e1, np.sin)
    with pytest.raises(ValueError):
        f.values[0] = 1.0
    assert isinstance(-f, ScalarField)
    np.testing.assert_array_equal((-f).values, -f.values)


def test_separation_field():
    s = grid("grid_euclidean", 0.0, 1.0, 0.05)
    A = np.flatnonzero(s.coords <= 0.2 + 1e-12)
    B = np.flatnonzero(s.coords >= 0.8 - 1e-12)
    f = separation_field(s, A, B)
    assert f.values[0] == 0.0 and f.values[-1] == 1.0
    assert np.all(np.diff(f.values) >= 0)
    with pytest.raises(EmptySet):
        separation_field(s, [], B)
    with pytest.raises(SetsNotSeparated):
        separation_field(s, [0, 1], [1, 2])


def test_truncated_distance_field():
    s = grid("grid_du", 0.0, 1.0, 0.25)
    f = truncated_distance_field(s, 1, 0.5)
    np.testing.assert_array_equal(f.values, [0, 0, 0.25, 0.5, 0.5])


# --------------------------------------------------------------------------- exact rung identities


def test_rung_identities_on_fixtures(small_quasi, small_metric, rng):
    for space in (small_quasi[0], small_metric):
        for _ in range(5):
            f = bind(space, rng.normal(size=space.n))
            for x0 in range(space.n):
                assert verify_lip_decomposition(space, f, x0).passed
                assert verify_constant_ordering(space, f, x0).passed


def test_ordering_sides_are_reported(small_metric):
    f = bind(small_metric, np.arange(small_metric.n, dtype=float))
    rep = verify_constant_ordering(small_metric, f, 0)
    assert rep.passed
    sides = rep.sides
    assert all(a <= b <= c for a, b, c in zip(sides["symmetric_domain"], sides["quasi"],
                                              sides["symmetric_target"]))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(3, 9))
def test_rung_identities_property(seed, n):
    rng = np.random.default_rng(seed)
    space = path_quasimetric(random_digraph(rng, n, 0.4), n)
    f = bind(space, rng.integers(-3, 4, size=n).astype(float))
    x0 = int(rng.integers(n))
    assert verify_lip_decomposition(space, f, x0).passed
    assert verify_constant_ordering(space, f, x0).passed


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_slip_oracle_property(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 8))
    space = path_quasimetric(random_digraph(rng, n, 0.5), n)
    f = rng.normal(size=n)
    b = slip_batch(space, bind(space, f))
    D = np.asarray(space.dist)
    for p in range(n):
        L = int(b.length[p])
        assert [s for s, _ in slip_ladder(D, f, p, b.radii[:L])] == b.s[p, :L].tolist()
