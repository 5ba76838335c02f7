import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from meanreflect import skorokhod_det as det
from meanreflect.errors import ConstraintViolation, InvalidArgument
from meanreflect.grid_paths import BarrierPair, GridPath, TimeGrid, total_variation

from conftest import random_instance

G3 = TimeGrid(np.array([0.0, 1.0, 2.0]))


def gp(vals, grid=G3):
    return GridPath(grid, vals)


def band(lo, up, grid=G3):
    return BarrierPair(
        None if lo is None else GridPath.constant(grid, lo),
        None if up is None else GridPath.constant(grid, up),
    )


SOLVERS = [det.solve_two_barrier_recursive, det.solve_two_barrier_formula,
           lambda y, b: det.solve_two_barrier_formula(y, b, naive=True)]


class TestExamples:
    @pytest.mark.parametrize("solve", SOLVERS)
    def test_inside_band(self, solve):
        s = solve(gp([0.5, 0.5, 0.5]), band(0, 1))
        assert s.k.values.tolist() == [0, 0, 0]
        assert s.x.values.tolist() == [0.5, 0.5, 0.5]

    @pytest.mark.parametrize("solve", SOLVERS)
    def test_two_sided_example(self, solve):
        s = solve(gp([0.0, 2.0, -1.0]), band(0, 1))
        assert s.k.values.tolist() == [0, -1, 1]
        assert s.x.values.tolist() == [0, 1, 0]

    @pytest.mark.parametrize("solve", SOLVERS)
    def test_zero_width_band_pins(self, solve):
        y = [0.0, 0.7, -2.5]
        s = solve(gp(y), band(0, 0))
        assert np.all(s.x.values == 0)
        assert np.all(s.k.values == -np.array(y))

    @pytest.mark.parametrize("solve", SOLVERS)
    def test_upper_unbounded(self, solve):
        s = solve(gp([0.0, 2.0, -1.0]), band(0, None))
        assert s.k.values.tolist() == [0, 0, 1]

    def test_lower_example(self):
        s = det.solve_lower(gp([1.0, -2.0, 0.0]), GridPath.constant(G3, 0.0))
        assert s.k.values.tolist() == [0, 2, 2]
        assert s.x.values.tolist() == [1, 0, 2]

    def test_lower_inactive(self):
        y = gp([0.0, 1.0, 3.0])
        assert np.all(det.solve_lower(y, y).k.values == 0)
        assert np.all(det.solve_lower(y, gp([0, 0, 0])).k.values == 0)

    def test_upper_example(self):
        g = TimeGrid(np.array([0.0, 1.0]))
        s = det.solve_upper(GridPath(g, [0.0, 3.0]), GridPath.constant(g, 1.0))
        assert s.k.values.tolist() == [0, -2]
        assert s.x.values.tolist() == [0, 1]
        assert np.all(det.solve_upper(gp([0, -1, 0.5]), GridPath.constant(G3, 1.0)).k.values == 0)

    @pytest.mark.parametrize("solve", [det.solve_two_barrier_recursive, det.solve_two_barrier_formula])
    def test_start_violation(self, solve):
        with pytest.raises(ConstraintViolation) as exc:
            solve(gp([1.5, 0, 0]), band(0, 1))
        assert exc.value.time == 0.0
        with pytest.raises(ConstraintViolation):
            det.solve_lower(gp([-1.0, 0, 0]), GridPath.constant(G3, 0.0))
        with pytest.raises(ConstraintViolation):
            det.solve_upper(gp([2.0, 0, 0]), GridPath.constant(G3, 1.0))

    def test_naive_size_limit(self):
        g = TimeGrid.uniform(600, 1.0)
        with pytest.raises(InvalidArgument):
            det.solve_two_barrier_formula(GridPath.constant(g, 0.0), band(-1, 1, g), naive=True)


class TestVariationBound:
    def test_example(self):
        y = gp([0.0, 2.0, -1.0])
        l, u = GridPath.constant(G3, 0.0), GridPath.constant(G3, 1.0)
        bound = det.variation_bound(y, l, u, 1 / 6)
        assert bound == 54.0
        k = det.solve_two_barrier_recursive(y, band(0, 1)).k
        assert total_variation(k) == 3.0 <= bound

    def test_constant_inside(self):
        y = GridPath.constant(G3, 0.5)
        assert det.variation_bound(y, GridPath.constant(G3, 0.0), GridPath.constant(G3, 1.0), 0.1) >= 0

    def test_band_precondition(self):
        y = gp([0.0, 2.0, -1.0])
        l, u = GridPath.constant(G3, 0.0), GridPath.constant(G3, 1.0)
        det.variation_bound(y, l, u, 1 / 6)  # boundary value accepted
        with pytest.raises(InvalidArgument, match="width is 1.0"):
            det.variation_bound(y, l, u, 0.2)
        with pytest.raises(InvalidArgument):
            det.variation_bound(y, l, u, 0.0)

    @given(st.integers(0, 2**32 - 1), st.floats(0.01, 1.0))
    def test_doubling_eta_never_increases(self, seed, frac):
        y, b = random_instance(np.random.default_rng(seed), 40, width_min=0.6)
        width = b.min_width()
        eta = frac * width / 12
        assert det.variation_bound(y, b.lower, b.upper, 2 * eta) <= det.variation_bound(y, b.lower, b.upper, eta)


class TestStability:
    def test_identical(self):
        y = gp([0.0, 2.0, -1.0])
        c = det.stability_bound_check(y, y, band(0, 1), band(0, 1))
        assert c.lhs_k == c.lhs_x == c.rhs_k == 0.0 and c.ok

    def test_barrier_shift(self):
        y = gp([0.0, 2.0, -1.0])
        c = det.stability_bound_check(y, y, band(0, 1), band(-0.25, 0.75))
        assert c.lhs_k <= 0.25 and c.ok

    def test_path_shift(self):
        y = gp([0.0, 2.0, -1.0])
        c = det.stability_bound_check(y, y + 0.1, band(-0.5, 1), band(-0.5, 1))
        assert c.lhs_k <= 0.1 + 1e-15 and c.ok


@given(st.integers(0, 2**32 - 1), st.integers(2, 400))
def test_formula_matches_recursion(seed, n):
    y, b = random_instance(np.random.default_rng(seed), n)
    kr = det.solve_two_barrier_recursive(y, b).k.values
    kf = det.solve_two_barrier_formula(y, b).k.values
    kn = det.solve_two_barrier_formula(y, b, naive=True).k.values
    assert np.max(np.abs(kr - kf)) <= 1e-10
    assert np.max(np.abs(kr - kn)) <= 1e-10


@given(st.integers(0, 2**32 - 1), st.integers(2, 300))
def test_axioms_hold(seed, n):
    y, b = random_instance(np.random.default_rng(seed), n)
    s = det.solve_two_barrier_recursive(y, b)
    assert s.k.values[0] == 0.0
    assert np.array_equal(s.x.values, y.values + s.k.values)
    rep = det.check_axioms(y, b, s)
    assert rep.ok, rep


@given(st.integers(0, 2**32 - 1), st.integers(2, 300))
def test_one_barrier_consistency(seed, n):
    y, b = random_instance(np.random.default_rng(seed), n)
    lo = det.solve_lower(y, b.lower)
    two = det.solve_two_barrier_recursive(y, BarrierPair(b.lower, None))
    assert np.array_equal(lo.k.values, two.k.values)
    up = det.solve_upper(y, b.upper)
    two = det.solve_two_barrier_recursive(y, BarrierPair(None, b.upper))
    assert np.array_equal(up.k.values, two.k.values)
    mirror = det.solve_lower(-y, -b.upper)
    assert np.array_equal(up.k.values, -mirror.k.values)
    assert np.all(np.diff(lo.k.values) >= 0) and np.all(np.diff(up.k.values) <= 0)


@given(st.integers(0, 2**32 - 1), st.integers(2, 200), st.floats(0.0, 0.5), st.floats(0.0, 0.5))
def test_lipschitz_bounds(seed, n, dy, db):
    rng = np.random.default_rng(seed)
    y, b = random_instance(rng, n)
    y2 = y + rng.uniform(-dy, dy, size=n)
    shift = rng.uniform(-db, db, size=n)
    b2 = BarrierPair(b.lower + shift, b.upper + shift)
    # keep the perturbed start admissible
    y2 = GridPath(y.grid, np.concatenate([[y.values[0] + shift[0]], y2.values[1:]]))
    assert det.stability_bound_check(y, y2, b, b2).ok


@given(st.integers(0, 2**32 - 1), st.integers(2, 200), st.floats(0.05, 1.0))
def test_variation_bound_holds(seed, n, frac):
    y, b = random_instance(np.random.default_rng(seed), n, width_min=0.3)
    eta = frac * b.min_width() / 6
    k = det.solve_two_barrier_recursive(y, b).k
    assert total_variation(k) <= det.variation_bound(y, b.lower, b.upper, eta)


def test_sign_conditions_per_step():
    rng = np.random.default_rng(3)
    for _ in range(50):
        y, b = random_instance(rng, 100)
        s = det.solve_two_barrier_recursive(y, b)
        dk = np.diff(s.k.values)
        x = s.x.values[1:]
        assert np.all(dk[x < b.upper.values[1:] - 1e-12] >= 0)
        assert np.all(dk[x > b.lower.values[1:] + 1e-12] <= 0)
