import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from meanreflect.errors import InvalidArgument, NumericalFailure
from meanreflect.grid_paths import GridPath, TimeGrid
from meanreflect.mean_map import (
    CHUNK,
    REGISTRY,
    Ensemble,
    H_forward,
    H_inverse,
    MeanConstraintFunction,
    affine,
    audit,
    chunked_mean,
    concave,
    deterministic_mean,
    identity,
    make_h,
    rescale,
    soft,
    sup_distance,
    time_tilt,
    transform_barriers,
)

# root of z + 0.25 (tanh(z - 1) + tanh(z + 1)) = 0.5, from a 50-digit mpmath solve
SOFT_ROOT = 0.4104869507104046828524

REGISTRY_SAMPLES = [identity(), affine(2.0, 1.0), affine(0.5, -3.0), soft(0.5), soft(0.95),
                    time_tilt(0.7, 2.0), concave(0.4), rescale(soft(0.3), 3.0, -1.0)]


def ens_strategy(max_size=60):
    return st.lists(st.floats(-20, 20, allow_nan=False), min_size=1, max_size=max_size).map(
        lambda v: Ensemble(np.array(v)))


class TestH:
    @given(ens_strategy())
    def test_identity_forward(self, ens):
        assert H_forward(identity(), 0.3, 0.7, ens) == pytest.approx(0.7, abs=1e-12)

    @given(ens_strategy(), st.floats(-5, 5))
    def test_affine_forward(self, ens, z):
        assert H_forward(affine(2.0, 1.0), 0.0, z, ens) == pytest.approx(2 * z + 1, abs=1e-11)

    def test_soft_symmetric(self):
        assert H_forward(soft(0.5), 0.0, 0.0, Ensemble([-1.0, 1.0])) == 0.0

    def test_identity_inverse_exact(self):
        ens = Ensemble(np.random.default_rng(0).normal(size=999))
        assert H_inverse(identity(), 0.0, 0.7, ens) == 0.7

    def test_affine_inverse(self):
        z = H_inverse(affine(2.0, 1.0), 0.0, 3.0, Ensemble([0.3, -2.0, 5.0]))
        assert z == pytest.approx(1.0, abs=1e-10)

    def test_soft_oracle(self):
        tol = 1e-10
        z = H_inverse(soft(0.5), 0.0, 0.5, Ensemble([-1.0, 1.0]), tol)
        assert abs(z - SOFT_ROOT) <= 2 * tol

    def test_tol_must_be_positive(self):
        with pytest.raises(InvalidArgument):
            H_inverse(identity(), 0.0, 1.0, Ensemble([0.0]), 0.0)

    def test_failure_carries_residual(self):
        # a step function violates the lower Lipschitz bound: no root exists
        bad = MeanConstraintFunction(lambda t, x: np.floor(x), 0.0, 1.0, 1.0, 1.0, "floor")
        with pytest.raises(NumericalFailure) as exc:
            H_inverse(bad, 0.0, 0.5, Ensemble([0.0]))
        assert exc.value.residual is not None and exc.value.residual > 1e-10

    @given(st.sampled_from(REGISTRY_SAMPLES), ens_strategy(), st.floats(-30, 30), st.floats(0, 2))
    def test_round_trip(self, h, ens, w, t):
        z = H_inverse(h, t, w, ens)
        assert abs(H_forward(h, t, z, ens) - w) <= 1e-10

    @given(st.sampled_from(REGISTRY_SAMPLES), ens_strategy(), st.floats(-10, 10), st.floats(0.0, 5))
    def test_monotone(self, h, ens, w, dw):
        assert H_inverse(h, 0.5, w, ens) <= H_inverse(h, 0.5, w + dw, ens) + 2e-10

    @given(st.sampled_from(REGISTRY_SAMPLES), st.integers(0, 5).flatmap(
        lambda e: st.lists(st.integers(-50, 50), min_size=2**e, max_size=2**e)),
           st.integers(-100, 100), st.floats(-3, 3))
    def test_translation_covariance(self, h, ints, c, z):
        # dyadic values on 2^e particles keep the mean and the shift exact
        v = np.array(ints, dtype=float) / 8
        a = H_forward(h, 0.2, z, Ensemble(v))
        b = H_forward(h, 0.2, z, Ensemble(v + c / 4))
        assert a == b

    @given(st.sampled_from(REGISTRY_SAMPLES), ens_strategy(), st.floats(-10, 10))
    def test_initial_bracket_has_sign_change(self, h, ens, w):
        f0 = H_forward(h, 0.1, w, ens) - w
        r = abs(f0) / h.c_h
        lo = H_forward(h, 0.1, w - r, ens) - w
        hi = H_forward(h, 0.1, w + r, ens) - w
        assert lo <= 1e-12 * (1 + abs(w)) and hi >= -1e-12 * (1 + abs(w))


class TestRegistry:
    @pytest.mark.parametrize("h", REGISTRY_SAMPLES, ids=lambda h: h.name)
    def test_audit(self, h):
        rep = audit(h, q=2.0)
        assert rep.ok, rep
        assert rep.min_slope > 0  # strictly increasing on the lattice

    def test_make_h(self):
        assert make_h("identity").kind == "identity"
        assert make_h({"name": "soft", "beta": 0.2}).C_h_upper == 1.2
        assert make_h({"name": "time_tilt", "gamma": 1.0}, horizon=2.0).C_h_upper == 3.0
        with pytest.raises(InvalidArgument):
            make_h({"name": "time_tilt", "gamma": 1.0})
        with pytest.raises(InvalidArgument):
            make_h({"name": "cubic"})
        with pytest.raises(InvalidArgument):
            make_h({"name": "soft", "gamma": 1})

    @pytest.mark.parametrize("bad", [lambda: soft(1.0), lambda: affine(0.0, 1), lambda: concave(-0.1),
                                     lambda: time_tilt(-1, 1)])
    def test_rejects(self, bad):
        with pytest.raises(InvalidArgument):
            bad()

    def test_registry_names(self):
        assert set(REGISTRY) == {"identity", "affine", "soft", "time_tilt", "concave"}

    def test_sup_distance_closed_forms(self):
        assert sup_distance(identity(), affine(1.0, 0.1), 1.0) == (pytest.approx(0.1), True)
        assert sup_distance(soft(0.2), soft(0.5), 1.0) == (pytest.approx(0.3), True)
        d, exact = sup_distance(time_tilt(0.5, 2.0), time_tilt(0.2, 2.0), 2.0)
        assert exact and d == pytest.approx(0.3 * 2 * math.pi / 2)
        d, exact = sup_distance(identity(), concave(0.1), 1.0, x_range=5.0)
        assert not exact and d == pytest.approx(0.1 * math.log1p(math.exp(5.0)), rel=1e-12)

    def test_sup_distance_lattice_agrees_with_closed_form(self):
        h1, h2 = soft(0.2), soft(0.5)
        d, _ = sup_distance(h1, h2, 1.0)
        xs = np.linspace(-10, 10, 2001)
        assert np.max(np.abs(h1(0, xs) - h2(0, xs))) <= d + 1e-15


class TestTransform:
    def grid_ens(self, n=5, N=50, seed=1):
        g = TimeGrid.uniform(n, 1.0)
        rng = np.random.default_rng(seed)
        return g, [Ensemble(rng.normal(size=N)) for _ in range(len(g))]

    def test_identity(self):
        g, ens = self.grid_ens()
        l = GridPath(g, np.linspace(-1, 0, len(g)))
        u = GridPath.constant(g, 2.0)
        lb, ub = transform_barriers(identity(), l, u, ens)
        assert np.array_equal(lb.values, l.values) and np.array_equal(ub.values, u.values)

    def test_touching(self):
        g, ens = self.grid_ens()
        l = GridPath.constant(g, 0.3)
        lb, ub = transform_barriers(soft(0.6), l, l, ens)
        assert np.max(np.abs(lb.values - ub.values)) <= 2e-10

    def test_affine(self):
        g, ens = self.grid_ens()
        l = GridPath(g, np.linspace(-1, 1, len(g)))
        lb, ub = transform_barriers(affine(4.0, 0.5), l, None, ens)
        assert ub is None
        assert np.allclose(lb.values, (l.values - 0.5) / 4.0, atol=1e-10)

    def test_length_mismatch(self):
        g, ens = self.grid_ens()
        with pytest.raises(InvalidArgument):
            transform_barriers(identity(), GridPath.constant(g, 0.0), None, ens[:-1])


class TestReductions:
    def test_mean_is_correctly_rounded_small(self):
        v = np.array([1e16, 1.0, -1e16, 1.0])
        assert deterministic_mean(v) == 0.5

    def test_chunked_workers_identical(self):
        v = np.sort(np.random.default_rng(5).normal(size=5 * CHUNK + 17))
        f = np.tanh
        ref = chunked_mean(f, v, 1)
        for w in (2, 3, 8):
            assert chunked_mean(f, v, w) == ref

    @given(st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=1, max_size=50), st.randoms())
    def test_permutation_invariance(self, vals, rnd):
        perm = list(vals)
        rnd.shuffle(perm)
        a, b = Ensemble(vals), Ensemble(perm)
        assert a.mean == b.mean and a.std() == b.std()
        assert a.expect(np.sin) == b.expect(np.sin)

    def test_empty_ensemble(self):
        with pytest.raises(InvalidArgument):
            Ensemble([])
