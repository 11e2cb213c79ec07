import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from doublewell.energy import (EnergyParams, QuadraticModel, energy_E, energy_gradient,
                               model_gradient, model_hessian_apply, model_value, p_linearized,
                               potential_F, potential_p)
from doublewell.grid import Grid, GridMismatchError, inner_product

unit = st.floats(-1.0, 1.0, allow_nan=False)


def fd(fn, u, v, s=1e-5):
    return (fn(u + s * v) - fn(u - s * v)) / (2 * s)


@pytest.fixture
def grid2d():
    return Grid.from_extent((12, 10))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


class TestScalars:
    @pytest.mark.parametrize("s, expected", [(1.0, 0.0), (-1.0, 0.0), (0.0, 0.25), (0.5, 0.140625)])
    def test_potential_F(self, s, expected):
        assert potential_F(s) == expected

    @pytest.mark.parametrize("s, expected", [(1.0, 0.0), (-1.0, 0.0), (0.0, -0.5), (0.5, -0.375)])
    def test_potential_p(self, s, expected):
        assert potential_p(s) == expected

    @given(st.floats(-10, 10))
    def test_p_squared_is_F(self, s):
        assert potential_p(s) ** 2 == pytest.approx(potential_F(s), rel=1e-14, abs=1e-300)

    def test_p_linearized_examples(self):
        assert p_linearized(1.0, 0.5) == -0.125
        assert p_linearized(0.0, 0.0) == -0.5

    @given(st.floats(-5, 5))
    def test_tangent_at_anchor(self, a):
        assert p_linearized(a, a) == pytest.approx(potential_p(a), abs=1e-12)

    @given(unit, unit)
    def test_convexity_gap(self, s, a):
        gap = potential_p(s) - p_linearized(s, a)
        assert gap >= -1e-15
        assert gap == pytest.approx(0.5 * (s - a) ** 2, abs=1e-14)

    def test_sign_bound_on_lattice(self):
        s, a = np.meshgrid(np.linspace(-1, 1, 201), np.linspace(-1, 1, 201))
        assert np.max(potential_p(s) + p_linearized(s, a)) <= 1e-12

    def test_sign_bound_fails_outside_box(self):
        # the bound genuinely needs |s| <= 1
        assert potential_p(1.5) + p_linearized(1.5, 1.0) > 0

    def test_arrays(self):
        s = np.array([0.0, 0.5, 1.0])
        assert np.array_equal(potential_F(s), [0.25, 0.140625, 0.0])
        assert np.array_equal(p_linearized(s, s), potential_p(s))


class TestEnergy:
    def test_pure_phase(self):
        g = Grid.from_extent((5, 5))
        assert energy_E(g, g.full(1.0), EnergyParams(0.3)) == 0.0
        assert energy_E(g, g.full(-1.0), EnergyParams(0.3)) == 0.0

    def test_constant_zero(self):
        g = Grid.from_extent((7,))
        assert energy_E(g, g.zeros(), EnergyParams(0.1)) == pytest.approx(25.0)

    def test_constant_half(self):
        g = Grid.from_extent((3, 3))
        assert energy_E(g, g.full(0.5), EnergyParams(1.0)) == pytest.approx(0.140625)

    def test_gradient_matches_finite_differences(self, grid2d, rng):
        p = EnergyParams(0.2)
        u, v = rng.uniform(-1, 1, grid2d.shape), rng.standard_normal(grid2d.shape)
        an = inner_product(grid2d, energy_gradient(grid2d, u, p), v)
        assert fd(lambda w: energy_E(grid2d, w, p), u, v) == pytest.approx(an, rel=1e-6)

    @pytest.mark.parametrize("eps", [0.0, -1.0, float("nan")])
    def test_params_validate(self, eps):
        with pytest.raises(ValueError):
            EnergyParams(eps)


class TestQuadraticModel:
    def test_value_at_anchor_is_energy(self, grid2d, rng):
        for eps in (0.05, 1.0):
            a = rng.uniform(-1, 1, grid2d.shape)
            p = EnergyParams(eps)
            e = energy_E(grid2d, a, p)
            for k in (None, 0.1):
                assert abs(model_value(QuadraticModel(grid2d, a, p, k), a) - e) <= 1e-12 * (1 + e)

    def test_constant_examples(self):
        g = Grid.from_extent((6,))
        a, u = g.full(0.5), g.full(1.0)
        p = EnergyParams(1.0)
        assert model_value(QuadraticModel(g, a, p), u) == pytest.approx(0.015625)
        assert model_value(QuadraticModel(g, a, p, 1.0), u) == pytest.approx(0.015625 + 0.125)

    @pytest.mark.parametrize("sign", [1.0, -1.0])
    def test_pure_phase_is_stationary(self, grid2d, sign):
        m = QuadraticModel(grid2d, grid2d.full(sign), EnergyParams(0.1))
        assert np.all(model_gradient(m, grid2d.full(sign)) == 0.0)

    @pytest.mark.parametrize("k", [None, 0.5])
    def test_gradient_of_constants(self, k):
        g = Grid.from_extent((4, 4))
        a, u, eps = 0.3, -0.6, 0.5
        m = QuadraticModel(g, g.full(a), EnergyParams(eps), k)
        expected = 2 / eps ** 2 * a * p_linearized(u, a) + ((u - a) / k if k else 0.0)
        assert np.allclose(model_gradient(m, g.full(u)), expected)

    @pytest.mark.parametrize("k", [None, 0.01, 1.0])
    def test_gradient_matches_finite_differences(self, grid2d, rng, k):
        for _ in range(5):
            m = QuadraticModel(grid2d, rng.uniform(-1, 1, grid2d.shape), EnergyParams(0.1), k)
            u, v = rng.uniform(-1, 1, grid2d.shape), rng.standard_normal(grid2d.shape)
            an = inner_product(grid2d, model_gradient(m, u), v)
            assert fd(m.value, u, v) == pytest.approx(an, rel=1e-6)

    def test_gradient_tangency(self, grid2d, rng):
        p = EnergyParams(0.07)
        a = rng.uniform(-1, 1, grid2d.shape)
        v = rng.standard_normal(grid2d.shape)
        an = inner_product(grid2d, model_gradient(QuadraticModel(grid2d, a, p), a), v)
        assert fd(lambda w: energy_E(grid2d, w, p), a, v) == pytest.approx(an, rel=1e-6)
        assert np.allclose(model_gradient(QuadraticModel(grid2d, a, p), a),
                           energy_gradient(grid2d, a, p), rtol=1e-12, atol=1e-9)

    def test_hessian_is_gradient_difference(self, grid2d, rng):
        m = QuadraticModel(grid2d, rng.uniform(-1, 1, grid2d.shape), EnergyParams(0.3), 0.2)
        u, v = rng.standard_normal(grid2d.shape), rng.standard_normal(grid2d.shape)
        assert np.allclose(model_gradient(m, u + v) - model_gradient(m, u),
                           model_hessian_apply(m, v), rtol=1e-10, atol=1e-8)

    def test_degenerate_anchor_hessian_kills_constants(self, grid2d):
        m = QuadraticModel(grid2d, grid2d.zeros(), EnergyParams(0.1))
        assert np.all(model_hessian_apply(m, grid2d.full(2.0)) == 0.0)

    def test_hessian_quadratic_form_bounds(self, grid2d, rng):
        for k in (None, 0.01, 3.0):
            m = QuadraticModel(grid2d, rng.uniform(-1, 1, grid2d.shape), EnergyParams(0.1), k)
            for _ in range(5):
                v = rng.standard_normal(grid2d.shape)
                q = inner_product(grid2d, model_hessian_apply(m, v), v)
                floor = inner_product(grid2d, v, v) / k if k else 0.0
                assert q >= floor * (1 - 1e-12)

    def test_grid_mismatch(self, grid2d):
        m = QuadraticModel(grid2d, grid2d.zeros(), EnergyParams(1.0))
        with pytest.raises(GridMismatchError):
            m.value(np.zeros(3))
        with pytest.raises(GridMismatchError):
            QuadraticModel(grid2d, np.zeros(5), EnergyParams(1.0))

    def test_verify_mode(self, grid2d, rng):
        QuadraticModel(grid2d, rng.uniform(-1, 1, grid2d.shape), EnergyParams(0.1), verify=True)

    def test_anchor_is_frozen(self, grid2d):
        a = grid2d.zeros()
        m = QuadraticModel(grid2d, a, EnergyParams(1.0))
        a[0, 0] = 5.0
        assert m.anchor[0, 0] == 0.0
        with pytest.raises(ValueError):
            m.anchor[0, 0] = 1.0


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.sampled_from([0.02, 0.1, 1.0]),
       st.sampled_from([None, 0.01, 1.0]))
def test_majorization_on_the_box(seed, eps, k):
    g = Grid.from_extent((9, 7))
    rng = np.random.default_rng(seed)
    u, a = rng.uniform(-1, 1, g.shape), rng.uniform(-1, 1, g.shape)
    p = EnergyParams(eps)
    assert energy_E(g, u, p) <= model_value(QuadraticModel(g, a, p, k), u) + 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(1e-3, 1e3))
def test_proximal_model_dominates(seed, k):
    g = Grid.from_extent((5, 5))
    rng = np.random.default_rng(seed)
    u, a = rng.uniform(-1, 1, g.shape), rng.uniform(-1, 1, g.shape)
    p = EnergyParams(0.1)
    plain, prox = QuadraticModel(g, a, p), QuadraticModel(g, a, p, k)
    assert prox.value(u) > plain.value(u)
    assert prox.value(a) == plain.value(a)
