import math

import numpy as np
import pytest

from conftest import canonical, heat_problem
from gpwide import build_problem, compare_wide_vs_parabolic, imex_step, make_grid, solve_parabolic
from gpwide.parabolic import Trajectory


def semidiscrete_amplitude(N, t):
    """Exact decay of sin(pi x) under the 3-point Laplacian."""
    h = 1.0 / N
    lam = 4 / h ** 2 * math.sin(math.pi * h / 2) ** 2
    return math.exp(-lam * t)


def test_constants_are_fixed_points():
    spec = build_problem(2, (0, 1), a=[["0", "1"], ["1", "0"]], beta="0", d=["1", "2 + t"], r=["1 + x", "1"],
                         f="0", v0=["0.3", "0.8"], boundary_mode="free")
    grid = make_grid(0, 1, 16, 1.0, 2)
    w = np.array([np.full(17, 0.3), np.full(17, 0.8)])
    for theta in (0.5, 1.0):
        out = imex_step(w, 0.2, 0.01, spec, grid, theta=theta)
        assert np.allclose(out, w, rtol=0, atol=1e-15)


def test_heat_oracle_amplitude():
    spec = heat_problem()
    grid = make_grid(0, 1, 128, 1.0, 2)
    traj = solve_parabolic(spec, 0.1, 1e-3, grid)
    assert traj.times[-1] == pytest.approx(0.1, abs=1e-15)
    assert abs(traj.states[-1, 0].max() - math.exp(-math.pi ** 2 * 0.1)) < 1e-3


@pytest.mark.parametrize("theta,lo,hi", [(0.5, 1.0, 3.0), (1.0, 0.95, 1.05)])
def test_time_convergence_order(theta, lo, hi):
    spec = heat_problem()
    N = 64
    grid = make_grid(0, 1, N, 1.0, 2)
    ref = semidiscrete_amplitude(N, 0.1)
    errs = []
    for dt in (4e-3, 2e-3, 1e-3):
        traj = solve_parabolic(spec, 0.1, dt, grid, theta=theta)
        errs.append(abs(traj.states[-1, 0, N // 2] - ref))
    orders = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
    # implicit Euler reaches first order from below (0.988, 0.994)
    assert all(lo <= p <= hi for p in orders)


def test_implicit_euler_step_matches_formula():
    spec = heat_problem()
    grid = make_grid(0, 1, 8, 1.0, 2)
    x = grid.x_nodes[0]
    w = np.sin(math.pi * x)[None]
    dt, h = 0.01, 1 / 8
    out = imex_step(w, 0.0, dt, spec, grid, theta=1.0)
    lap = np.zeros(9)
    lap[1:-1] = (out[0, 2:] - 2 * out[0, 1:-1] + out[0, :-2]) / h ** 2
    assert np.allclose((out[0, 1:-1] - w[0, 1:-1]) / dt, lap[1:-1], atol=1e-12)
    assert out[0, 0] == 0.0 and out[0, -1] == w[0, -1]


def test_large_competition_matches_forward_euler_ode():
    beta = 1e4
    spec = build_problem(2, (0, 1), a=[["0", "1"], ["1", "0"]], beta=str(beta), d="1", r="1", f="0",
                         v0=["0.5", "0.5"], boundary_mode="free")
    grid = make_grid(0, 1, 8, 1.0, 2)
    dt = 1e-5
    w = np.full((2, 9), 0.5)
    u = 0.5
    prev = w
    for n in range(20):
        w = imex_step(w, n * dt, dt, spec, grid, theta=1.0)
        u = u - dt * beta * u ** 3
        assert np.all(w < prev)
        assert np.allclose(w, u, rtol=1e-12)
        prev = w


def test_zero_horizon():
    spec = canonical()
    traj = solve_parabolic(spec, 0.0, 1e-3, make_grid(0, 1, 16, 1.0, 2))
    assert len(traj.times) == 1 and np.allclose(traj.states[0, 0], np.linspace(0, 1, 17))


def test_canonical_box_violation():
    spec = canonical()
    traj = solve_parabolic(spec, 1.0, 1e-3, make_grid(0, 1, 64, 1.0, 2))
    assert traj.max_box_violation <= 1e-6
    assert np.all(np.diff(traj.times) > 0) and traj.times[0] == 0


def test_unconditional_stability():
    spec = heat_problem()
    N = 64
    grid = make_grid(0, 1, N, 1.0, 2)
    traj = solve_parabolic(spec, 2.0, 10 / N, grid)
    assert np.all(np.isfinite(traj.states))
    assert np.abs(traj.states).max() <= 1.0


def test_neumann_mass_conservation():
    spec = heat_problem(boundary="free", v0="0.5 + 0.4*cos(3.141592653589793*x) + 0.05*x^3")
    grid = make_grid(0, 1, 32, 1.0, 2)
    traj = solve_parabolic(spec, 0.2, 1e-3, grid)
    q = traj.node_weights
    mass = traj.states[:, 0] @ q
    assert np.all(np.abs(np.diff(mass)) / mass[0] < 1e-10)


def test_record_every_keeps_endpoint():
    spec = heat_problem()
    grid = make_grid(0, 1, 16, 1.0, 2)
    full = solve_parabolic(spec, 0.1, 1e-2, grid)
    sparse = solve_parabolic(spec, 0.1, 1e-2, grid, record_every=3)
    assert sparse.times[-1] == full.times[-1]
    assert np.array_equal(sparse.states[-1], full.states[-1])
    assert np.array_equal(sparse.states[1], full.states[3])


@pytest.mark.parametrize("kw", [dict(T=-1.0, dt=1e-3), dict(T=1.0, dt=0.0)])
def test_solve_preconditions(kw):
    with pytest.raises(ValueError):
        solve_parabolic(heat_problem(), grid=make_grid(0, 1, 8, 1.0, 2), **kw)


def test_theta_range():
    with pytest.raises(ValueError):
        imex_step(np.zeros((1, 9)), 0.0, 0.1, heat_problem(), make_grid(0, 1, 8, 1.0, 2), theta=0.3)


# ---------------------------------------------------------------- comparison

def test_self_distance_is_zero():
    spec = canonical()
    traj = solve_parabolic(spec, 0.5, 1e-2, make_grid(0, 1, 16, 1.0, 2))
    assert compare_wide_vs_parabolic([traj], traj, 0.5)[0] == 0.0


def test_distance_of_shifted_trajectory():
    x = np.linspace(0, 1, 11)
    times = np.linspace(0, 1, 6)
    base = Trajectory(times=times, states=np.zeros((6, 1, 11)), x=x, dt=0.2)
    shifted = Trajectory(times=times, states=np.full((6, 1, 11), 0.3), x=x, dt=0.2)
    # ||0.3||_{L2((0,1)^2)} = 0.3
    assert compare_wide_vs_parabolic([shifted], base, 1.0)[0] == pytest.approx(0.3, rel=1e-14)


def test_comparison_errors():
    x = np.linspace(0, 1, 11)
    times = np.linspace(0, 1, 6)
    base = Trajectory(times=times, states=np.zeros((6, 1, 11)), x=x, dt=0.2)
    other = Trajectory(times=times, states=np.zeros((6, 1, 11)), x=2 * x, dt=0.2)
    with pytest.raises(ValueError):
        compare_wide_vs_parabolic([other], base, 1.0)
    short = Trajectory(times=times / 2, states=np.zeros((6, 1, 11)), x=x, dt=0.1)
    with pytest.raises(ValueError):
        compare_wide_vs_parabolic([short], base, 1.0)
    with pytest.raises(ValueError):
        compare_wide_vs_parabolic([base], base, 2.0)
