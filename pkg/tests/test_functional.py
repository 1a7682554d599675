import math

import numpy as np
import pytest

from conftest import canonical, random_admissible, rich_problem
from gpwide import (GrowthConstants, bound_constants, build_problem, el_residual, energy_traces, evaluate_F_eps,
                    gradient_F_eps, make_grid, minimize, truncation_horizon)
from gpwide.errors import AdmissibilityError
from gpwide.functional import wide_functional


def stationary_v0(spec, grid):
    fn = wide_functional(spec, grid, 0.1)
    return fn.admissible_template()


def fd_gradient(fn, v, delta=1e-6):
    free = ~np.broadcast_to(fn.pinned, v.shape)
    out = np.zeros_like(v)
    for idx in zip(*np.nonzero(free)):
        vp = v.copy()
        vm = v.copy()
        vp[idx] += delta
        vm[idx] -= delta
        out[idx] = (fn.value(vp, check=False) - fn.value(vm, check=False)) / (2 * delta)
    return out, free


# ---------------------------------------------------------------- values

def test_canonical_value_at_v0():
    spec = canonical()
    eps = 0.1
    T = truncation_horizon(eps, 0.0, 1e-12)
    grid = make_grid(0, 1, 64, T, 64)
    v = stationary_v0(spec, grid)
    val = evaluate_F_eps(v, spec, grid, eps)
    # constant in time, so the only discretization error is the O(h^4) trapezoid error
    assert val == pytest.approx(61 / 30 * (1 - math.exp(-T / eps)), abs=1e-6)


def test_value_converges_in_h():
    spec = canonical()
    errs = []
    for N in (16, 32, 64):
        grid = make_grid(0, 1, N, 2.8, 8)
        errs.append(abs(evaluate_F_eps(stationary_v0(spec, grid), spec, grid, 0.1) - 61 / 30 * (1 - math.exp(-28))))
    # the quartic coupling density has f'(0) = f'(1) = 0, so trapezoid is O(h^4)
    assert errs[0] / errs[1] == pytest.approx(16, rel=0.05)
    assert errs[1] / errs[2] == pytest.approx(16, rel=0.05)


def test_zero_field_zero_value():
    spec = canonical(v0=["0", "0"])
    grid = make_grid(0, 1, 8, 1.0, 8)
    assert evaluate_F_eps(np.zeros(grid.field_shape(2)), spec, grid, 0.1) == 0.0


def test_rejects_wrong_initial_slice():
    spec = canonical()
    grid = make_grid(0, 1, 8, 1.0, 8)
    v = stationary_v0(spec, grid)
    v[0, 0, 3] += 1e-14
    with pytest.raises(AdmissibilityError):
        evaluate_F_eps(v, spec, grid, 0.1)


def test_rejects_wrong_trace():
    spec = canonical()
    grid = make_grid(0, 1, 8, 1.0, 8)
    v = stationary_v0(spec, grid)
    v[1, 4, 0] = 0.5
    with pytest.raises(AdmissibilityError):
        evaluate_F_eps(v, spec, grid, 0.1)


def test_rejects_eps_above_threshold():
    spec = canonical()
    grid = make_grid(0, 1, 8, 1.0, 8)
    with pytest.raises(ValueError):
        evaluate_F_eps(stationary_v0(spec, grid), spec, grid, 0.5)


def test_lower_and_upper_bounds(rng):
    spec = canonical(f=["s*(1-s)", "0.5*(1-s)"], growth=GrowthConstants(A1=1, C1=1, D1=1, H1=1))
    grid = make_grid(0, 1, 16, 2.0, 20)
    bc = bound_constants(spec, grid)
    fn = wide_functional(spec, grid, 0.1)
    for _ in range(10):
        assert fn.value(random_admissible(fn, rng)) >= -bc.M1
    assert fn.value(fn.admissible_template()) <= bc.M2


# ---------------------------------------------------------------- gradient

@pytest.mark.parametrize("shape", [(4, 4), (8, 8)])
def test_gradient_matches_finite_differences(shape, rng):
    M, N = shape
    spec = rich_problem()
    grid = make_grid(0, 1, N, 0.4, M)
    fn = wide_functional(spec, grid, 0.1)
    v = random_admissible(fn, rng)
    g = fn.gradient(v)
    fd, free = fd_gradient(fn, v)
    rel = np.abs(g[free] - fd[free]) / np.maximum(np.abs(fd[free]), 1e-3)
    assert rel.max() < 1e-5


def test_gradient_matches_value_and_gradient(rng):
    spec = rich_problem()
    grid = make_grid(0, 1, 6, 0.4, 5)
    fn = wide_functional(spec, grid, 0.1)
    v = random_admissible(fn, rng)
    val, g = fn.value_and_gradient(v)
    assert val == fn.value(v)
    assert np.array_equal(g, gradient_F_eps(v, spec, grid, 0.1))


def test_gradient_2d_matches_finite_differences(rng):
    spec = build_problem(2, ((0, 1), (0, 1)), a=[["0", "1"], ["1", "0"]], beta="1 + t", d=["1", "1 + t"],
                         r="1", f=["s*(1-s)", "0"], v0=["x*(1-x)", "1 - x"],
                         growth=GrowthConstants(A1=2, C1=2, H1=1, D1=2, D3=1))
    grid = make_grid(0, 1, 3, 0.3, 3, y=(0, 1), Ny=3)
    fn = wide_functional(spec, grid, 0.1)
    v = random_admissible(fn, rng)
    g = fn.gradient(v)
    fd, free = fd_gradient(fn, v)
    rel = np.abs(g[free] - fd[free]) / np.maximum(np.abs(fd[free]), 1e-3)
    assert rel.max() < 1e-5


def test_linear_field_is_discretely_harmonic():
    spec = build_problem(1, (0, 1), a=[["0"]], beta="0", d="1", r="1", f="0", v0=["0.2 + 0.6*x"])
    grid = make_grid(0, 1, 10, 1.0, 10)
    fn = wide_functional(spec, grid, 0.1)
    v = fn.admissible_template()
    g = fn.gradient(v)
    assert np.max(np.abs(g[0, 1:, 1:-1])) < 1e-13


def test_increment_matches_value_difference(rng):
    spec = rich_problem()
    grid = make_grid(0, 1, 8, 0.4, 6)
    fn = wide_functional(spec, grid, 0.1)
    v = random_admissible(fn, rng)
    w = random_admissible(fn, rng)
    assert fn.increment(v, w - v) == pytest.approx(fn.value(w) - fn.value(v), abs=1e-12)


# ---------------------------------------------------------------- residual

def test_residual_vanishes_on_exponential():
    eps = 0.4
    spec = build_problem(1, (0, 1), a=[["0"]], beta="0", d="1", r="1", f="0", v0=["1"],
                         growth=GrowthConstants(A1=1, C1=1, D1=1))
    res = []
    for M in (20, 40):
        grid = make_grid(0, 1, 4, 0.5, M)
        v = np.broadcast_to(np.exp(grid.t_nodes / eps)[:, None], (1, M + 1, 5)).copy()
        res.append(np.abs(el_residual(v, spec, grid, eps)).max())
    assert res[0] < 1e-2
    assert res[0] / res[1] == pytest.approx(4, rel=0.1)


def test_residual_zero_field():
    spec = canonical(v0=["0", "0"], f=["s*(1-s)", "0"], growth=GrowthConstants(A1=1, C1=1, D1=1, H1=1))
    grid = make_grid(0, 1, 8, 1.0, 8)
    assert np.all(el_residual(np.zeros(grid.field_shape(2)), spec, grid, 0.1) == 0)


def test_residual_at_minimizer_decreases_under_refinement():
    spec = canonical()
    eps = 0.1
    out = []
    for N, M in ((16, 80), (32, 160), (64, 320)):
        grid = make_grid(0, 1, N, 2.0, M)
        res = minimize(spec, grid, eps)
        assert res.converged
        out.append(np.abs(el_residual(res.v, spec, grid, eps)).max())
    orders = [math.log2(a / b) for a, b in zip(out, out[1:])]
    # first order reached from below: observed 0.85 then 0.92, peak at t = dt
    assert orders[1] > orders[0] >= 0.8
    assert orders[1] >= 0.9


# ---------------------------------------------------------------- energies

def test_stationary_field_has_no_inertia():
    spec = canonical()
    grid = make_grid(0, 1, 16, 2.0, 32)
    rep = energy_traces(stationary_v0(spec, grid), spec, grid, 0.1)
    assert np.all(rep.I == 0)


def test_E0_equals_F(rng):
    spec = rich_problem()
    grid = make_grid(0, 1, 8, 0.4, 10)
    fn = wide_functional(spec, grid, 0.1)
    v = random_admissible(fn, rng)
    rep = energy_traces(v, spec, grid, 0.1)
    assert rep.E[0] == pytest.approx(fn.value(v), rel=1e-12)
    assert rep.F_eps == fn.value(v)
    assert rep.E.shape == rep.I.shape == rep.Q.shape == rep.R.shape == (grid.M + 1,)


def test_time_independent_problem_has_zero_Q(rng):
    spec = canonical(f=["s*(1-s)", "0"], growth=GrowthConstants(A1=1, C1=1, D1=1, H1=1))
    grid = make_grid(0, 1, 8, 1.0, 10)
    fn = wide_functional(spec, grid, 0.1)
    rep = energy_traces(random_admissible(fn, rng), spec, grid, 0.1)
    assert np.all(rep.Q == 0)


def smooth_field(spec, grid):
    T, X = np.meshgrid(grid.t_nodes, grid.x_nodes[0], indexing="ij")
    bump = 0.2 * np.sin(math.pi * X) * (1 - np.exp(-3 * T))
    bump[:, [0, -1]] = 0.0
    return np.stack([X + bump * (1 - X), 1 - X - bump * X])


def test_ode_residual_is_first_order():
    spec = rich_problem()
    eps = 0.1
    res = []
    for M in (40, 80, 160):
        grid = make_grid(0, 1, 16, 2.0, M)
        rep = energy_traces(smooth_field(spec, grid), spec, grid, eps)
        res.append(np.abs(rep.ode_residual).max())
    ratios = [b / a for a, b in zip(res, res[1:])]
    assert all(0.35 <= r <= 0.65 for r in ratios)


def test_q_bound_on_minimizer():
    spec = canonical(beta="1 + t", d="1 + 0.5*sin(t)",
                     growth=GrowthConstants(A1=2, C1=1, C2=1, D1=2, D3=1))
    eps = 0.1
    grid = make_grid(0, 1, 16, 3.0, 48)
    res = minimize(spec, grid, eps)
    bc = bound_constants(spec, grid)
    rep = energy_traces(res.v, spec, grid, eps, constants=bc)
    assert rep.q_bound_excess(bc.D3, bc.M_tilde1, bc.M_tilde2) <= 0
