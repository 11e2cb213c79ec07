import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from doublewell.energy import EnergyParams, QuadraticModel
from doublewell.grid import Grid
from doublewell.qp import (BoxConstraint, estimate_hessian_norm, kkt_residual, project_to_K,
                           solve_box_qp)


def scan_constants(a, eps, k=None, step=1e-4):
    c = np.linspace(-1, 1, int(round(2 / step)) + 1)
    dens = (a * c - a * a / 2 - 0.5) ** 2 / eps ** 2
    if k is not None:
        dens = dens + (c - a) ** 2 / (2 * k)
    return c[np.argmin(dens)]


def brute_force_values(anchor, h, eps, k, pts):
    """Model value written out directly for 1D fields (one per row)."""
    out = np.zeros(len(pts))
    for i in range(pts.shape[1] - 1):
        out += 0.5 * h * ((pts[:, i + 1] - pts[:, i]) / h) ** 2
    for i in range(pts.shape[1]):
        out += h / eps ** 2 * (anchor[i] * pts[:, i] - anchor[i] ** 2 / 2 - 0.5) ** 2
        if k is not None:
            out += h / (2 * k) * (pts[:, i] - anchor[i]) ** 2
    return out


class TestProjection:
    def test_clamps(self):
        assert np.all(project_to_K(np.full(4, 1.25)) == 1.0)
        assert np.all(project_to_K(np.full(4, -3.0)) == -1.0)

    @given(st.lists(st.floats(-5, 5), min_size=1, max_size=20))
    def test_idempotent_and_fixes_feasible(self, values):
        u = np.array(values)
        p = project_to_K(u)
        assert np.array_equal(project_to_K(p), p)
        inside = np.abs(u) <= 1
        assert np.array_equal(p[inside], u[inside])

    def test_empty_box_rejected(self):
        with pytest.raises(ValueError):
            BoxConstraint(1.0, 1.0)


class TestSolve:
    @pytest.mark.parametrize("a, expected", [(0.5, 1.0), (-0.8, -1.0), (1.0, 1.0), (-1.0, -1.0)])
    def test_constant_anchors(self, a, expected):
        assert scan_constants(a, 1.0) == expected
        g = Grid.from_extent((6,))
        m = QuadraticModel(g, g.full(a), EnergyParams(1.0))
        u, rep = solve_box_qp(m, g.full(a))
        assert rep.status == "converged"
        assert np.allclose(u, expected, atol=1e-10)

    @pytest.mark.parametrize("a", [0.3, 0.5, -0.6, 0.9])
    @pytest.mark.parametrize("k", [0.1, 1.0, 100.0])
    def test_constant_anchor_with_time_step_matches_scan(self, a, k):
        g = Grid.from_extent((3, 3))
        m = QuadraticModel(g, g.full(a), EnergyParams(1.0), k)
        u, _ = solve_box_qp(m, g.full(a), tol=1e-12)
        assert np.allclose(u, scan_constants(a, 1.0, k), atol=1e-4)

    def test_start_defaults_to_anchor(self):
        g = Grid.from_extent((5,))
        m = QuadraticModel(g, g.full(0.5), EnergyParams(1.0))
        assert np.allclose(solve_box_qp(m)[0], 1.0)

    def test_infeasible_start(self):
        g = Grid.from_extent((3,))
        m = QuadraticModel(g, g.full(0.5), EnergyParams(1.0))
        with pytest.raises(ValueError):
            solve_box_qp(m, g.full(1.1))

    def test_feasible_and_monotone_every_iteration(self):
        g = Grid.from_extent((20, 20))
        rng = np.random.default_rng(3)
        a = rng.uniform(-1, 1, g.shape)
        m = QuadraticModel(g, a, EnergyParams(0.05))
        values = [m.value(a)]

        def record(x):
            assert np.all(np.abs(x) <= 1.0)
            values.append(m.value(x))

        _, rep = solve_box_qp(m, a, callback=record)
        assert len(values) > 2
        assert np.all(np.diff(values) <= 1e-12 * (1 + abs(values[0])))
        assert rep.final_model_value <= rep.start_model_value

    def test_early_stop_still_decreases(self):
        g = Grid.from_extent((16, 16))
        a = np.random.default_rng(4).uniform(-1, 1, g.shape)
        m = QuadraticModel(g, a, EnergyParams(0.05))
        u, rep = solve_box_qp(m, a, max_iter=2)
        assert rep.status == "max_iter" and rep.iterations == 2
        assert m.value(u) <= m.value(a)
        assert np.all(np.abs(u) <= 1)

    def test_degenerate_anchor(self):
        g = Grid.from_extent((4,))
        m = QuadraticModel(g, g.zeros(), EnergyParams(1.0))
        u, rep = solve_box_qp(m, g.zeros())
        assert rep.status == "degenerate_flat"
        assert np.all(u == 0.0)

    def test_converged_result_satisfies_kkt(self):
        g = Grid.from_extent((16, 16))
        rng = np.random.default_rng(5)
        for k in (None, 1e-2, 10.0):
            a = rng.uniform(-1, 1, g.shape)
            m = QuadraticModel(g, a, EnergyParams(0.1), k)
            u, rep = solve_box_qp(m, a, tol=1e-12)
            assert rep.status == "converged"
            scale = 1 + np.max(np.abs(m.gradient(a)))
            assert kkt_residual(m, u) <= 1e-9 * scale

    def test_power_estimate_is_below_the_gershgorin_bound(self):
        g = Grid.from_extent((16, 16))
        m = QuadraticModel(g, g.full(0.5), EnergyParams(0.1), 0.01)
        lam = estimate_hessian_norm(m)
        bound = 8 / g.spacing[0] ** 2 + 2 * 0.25 / 0.01 + 100
        assert 0.5 * bound < lam <= bound


class TestKKT:
    def test_upper_bound_with_outward_gradient_is_optimal(self):
        g = Grid.from_extent((4,))
        m = QuadraticModel(g, g.full(0.5), EnergyParams(1.0))
        assert np.allclose(m.gradient(g.full(1.0)), -0.125)
        assert kkt_residual(m, g.full(1.0)) == 0.0

    def test_non_stationary_anchor(self):
        g = Grid.from_extent((4,))
        m = QuadraticModel(g, g.full(0.5), EnergyParams(1.0))
        # gradient at the anchor is 2 * 0.5 * p_L(0.5; 0.5) = -0.375
        assert kkt_residual(m, g.full(0.5)) == pytest.approx(0.375)

    def test_lower_bound(self):
        g = Grid.from_extent((4,))
        m = QuadraticModel(g, g.full(-0.8), EnergyParams(1.0))
        assert kkt_residual(m, g.full(-1.0)) == 0.0
        assert kkt_residual(m, g.full(1.0)) > 0.0

    def test_rejects_infeasible(self):
        g = Grid.from_extent((2,))
        m = QuadraticModel(g, g.zeros(), EnergyParams(1.0))
        with pytest.raises(ValueError):
            kkt_residual(m, g.full(1.0 + 1e-9))


@pytest.mark.parametrize("name, anchor", [
    ("half", np.full(4, 0.5)),
    ("alternating", np.array([0.8, -0.8, 0.8, -0.8])),
    ("ramp", np.array([-0.9, -0.2, 0.4, 0.7])),
    ("zeros", np.zeros(4)),
])
@pytest.mark.parametrize("k", [None, 1.0])
def test_matches_exhaustive_scan(name, anchor, k):
    g = Grid.from_extent((4,))
    axis = np.linspace(-1, 1, 21)
    pts = np.array(list(itertools.product(axis, repeat=4)))
    vals = brute_force_values(anchor, g.spacing[0], 1.0, k, pts)
    ties = pts[vals <= vals.min() + 1e-12]
    m = QuadraticModel(g, anchor, EnergyParams(1.0), k)
    u, _ = solve_box_qp(m, anchor, tol=1e-12)
    assert np.min(np.max(np.abs(ties - u), axis=1)) <= 0.1
    assert m.value(u) <= vals.min() + 1e-12
    assert kkt_residual(m, u) <= 1e-8


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.sampled_from([None, 0.01, 1.0, 100.0]))
def test_never_increases_model(seed, k):
    g = Grid.from_extent((8, 8))
    rng = np.random.default_rng(seed)
    a = rng.uniform(-1, 1, g.shape)
    start = rng.uniform(-1, 1, g.shape)
    m = QuadraticModel(g, a, EnergyParams(0.05), k)
    u, rep = solve_box_qp(m, start, max_iter=int(rng.integers(1, 30)))
    assert np.all(np.abs(u) <= 1)
    assert m.value(u) <= m.value(start)
