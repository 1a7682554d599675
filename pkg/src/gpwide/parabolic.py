"""IMEX reference stepper for the parabolic limit system (1D).

Diffusion is treated with a theta scheme (theta = 1 is backward Euler at
t_{n+1}; the default 0.5 is Crank-Nicolson after a few backward Euler
start-up steps), reaction and competition explicitly at t_n.  Each step is one
batched tridiagonal solve.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .grid import Grid
from .problem import ProblemSpec, reaction

DEFAULT_THETA = 0.5
STARTUP_STEPS = 2


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (n_t, k, N + 1)
    x: np.ndarray
    dt: float
    box_violation: np.ndarray = field(default=None)  # per recorded state
    boundary_mode: str = "dirichlet_trace"

    def __post_init__(self):
        if self.box_violation is None:
            self.box_violation = np.array([_box_violation(s) for s in self.states])

    @property
    def k(self):
        return self.states.shape[1]

    @property
    def max_box_violation(self):
        return float(np.max(self.box_violation)) if len(self.box_violation) else 0.0

    @property
    def node_weights(self):
        h = self.x[1] - self.x[0]
        q = np.full(self.x.size, h)
        q[[0, -1]] *= 0.5
        return q

    def window(self, T0, T1):
        """Indices of the recorded times inside [T0, T1] (with a relative slack)."""
        slack = 1e-9 * max(1.0, abs(T1))
        if T0 < self.times[0] - slack or T1 > self.times[-1] + slack:
            raise ValueError(f"window [{T0}, {T1}] outside the trajectory [0, {self.times[-1]}]")
        return np.flatnonzero((self.times >= T0 - slack) & (self.times <= T1 + slack))


def _box_violation(state):
    return float(max(0.0, -np.min(state), np.max(state) - 1.0))


class _Coefficients:
    """Per-step coefficient sampling; time-independent pieces are evaluated once."""

    def __init__(self, spec: ProblemSpec, x):
        self.spec, self.x = spec, x
        k = spec.k
        self.r = np.stack([np.broadcast_to(spec.r[i](x=x), x.shape) for i in range(k)])
        self._const = {}

    def _cached(self, key, expr, t, with_x=True):
        if not expr.depends_on("t"):
            if key not in self._const:
                self._const[key] = np.array(np.broadcast_to(expr(t=0.0, x=self.x) if with_x else expr(t=0.0),
                                                            self.x.shape if with_x else ()))
            return self._const[key]
        val = expr(t=t, x=self.x) if with_x else expr(t=t)
        return np.broadcast_to(val, self.x.shape if with_x else ())

    def d(self, i, t):
        return float(self._cached(("d", i), self.spec.d[i], t, with_x=False))

    def beta(self, t):
        return self._cached("beta", self.spec.beta, t)

    def a(self, i, j, t):
        return self._cached(("a", i, j), self.spec.a[i][j], t)


def _laplacian(w, h, neumann):
    lap = np.empty_like(w)
    lap[..., 1:-1] = (w[..., :-2] - 2 * w[..., 1:-1] + w[..., 2:]) / h ** 2
    if neumann:
        lap[..., 0] = 2 * (w[..., 1] - w[..., 0]) / h ** 2
        lap[..., -1] = 2 * (w[..., -2] - w[..., -1]) / h ** 2
    else:
        lap[..., 0] = lap[..., -1] = 0.0
    return lap


def _explicit_terms(state, t, spec, coef):
    k = spec.k
    out = np.zeros_like(state)
    x = coef.x
    for i in range(k):
        if not spec.f[i].is_zero:
            out[i] += reaction(spec, i, t, x, state[i])
    if not spec.a_is_zero:
        beta = coef.beta(t)
        sq = state * state
        for i in range(k):
            acc = np.zeros_like(x)
            for j in range(k):
                if j != i and not spec.a[i][j].is_zero:
                    acc = acc + coef.a(i, j, t) * sq[j]
            out[i] -= beta * state[i] * acc
    return out


def imex_step(state, t_n, dt, spec: ProblemSpec, grid: Grid, theta=1.0, _coef=None, _g=None):
    """Advance one step.

    Solves, per species, (r/dt - theta d(t_{n+1}) L) w^{n+1}
    = (r/dt) w^n + (1 - theta) d(t_n) L w^n + f(t_n, x, w^n) - beta w^n sum_j a_ij (w_j^n)^2,
    with L the 3-point Laplacian, Dirichlet rows w = g (dirichlet_trace) or
    ghost-point Neumann rows (free).  ``theta = 1`` is the plain IMEX Euler step.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if not 0.5 <= theta <= 1.0:
        raise ValueError("theta must lie in [1/2, 1]")
    if grid.dim != 1:
        raise ValueError("the parabolic reference is 1D only")
    state = np.asarray(state, dtype=float)
    k = spec.k
    x = grid.x_nodes[0]
    h = grid.h[0]
    coef = _coef or _Coefficients(spec, x)
    neumann = spec.boundary_mode == "free"
    t1 = t_n + dt
    rhs = coef.r / dt * state + _explicit_terms(state, t_n, spec, coef)
    n = x.size
    lower = np.empty((k, n)); diag = np.empty((k, n)); upper = np.empty((k, n))
    for i in range(k):
        d1 = coef.d(i, t1)
        if theta < 1.0:
            rhs[i] += (1.0 - theta) * coef.d(i, t_n) * _laplacian(state[i], h, neumann)
        c = theta * d1 / h ** 2
        lower[i] = -c
        upper[i] = -c
        diag[i] = coef.r[i] / dt + 2 * c
        if neumann:
            upper[i, 0] = -2 * c
            lower[i, -1] = -2 * c
    if not neumann:
        g = _g if _g is not None else np.stack([spec.initial_profile(i, grid.x_nodes)[[0, -1]] for i in range(k)])
        for end, col in ((0, 0), (1, -1)):
            diag[:, col] = 1.0
            lower[:, col] = 0.0
            upper[:, col] = 0.0
            rhs[:, col] = g[:, end]
    if np.any(diag <= 0):
        raise AssertionError("tridiagonal system is not diagonally dominant")
    return _kernels.thomas(lower, diag, upper, rhs)


def solve_parabolic(spec: ProblemSpec, T, dt, grid: Grid, theta=DEFAULT_THETA,
                    startup_steps=STARTUP_STEPS, record_every=1) -> Trajectory:
    """Integrate from v0 to time T.

    The step count is ceil(T/dt); dt is shrunk to land on T exactly.  With
    theta < 1 the first ``startup_steps`` steps use theta = 1 to damp the
    high-frequency content of rough data.
    """
    if T < 0 or not dt > 0:
        raise ValueError("need T >= 0 and dt > 0")
    if grid.dim != 1:
        raise ValueError("the parabolic reference is 1D only")
    x = grid.x_nodes[0]
    w = np.stack([spec.initial_profile(i, grid.x_nodes) for i in range(spec.k)])
    steps = int(math.ceil(T / dt - 1e-9)) if T > 0 else 0
    dt_eff = T / steps if steps else dt
    coef = _Coefficients(spec, x)
    g = w[:, [0, -1]].copy()
    times = [0.0]
    states = [w.copy()]
    viol = [_box_violation(w)]
    worst = viol[0]
    for n in range(steps):
        th = 1.0 if n < startup_steps else theta
        w = imex_step(w, n * dt_eff, dt_eff, spec, grid, theta=th, _coef=coef, _g=g)
        if not np.all(np.isfinite(w)):
            from .errors import NumericsError
            raise NumericsError(f"non-finite state at step {n + 1}", iterate=w)
        worst = max(worst, _box_violation(w))
        if (n + 1) % record_every == 0 or n + 1 == steps:
            times.append((n + 1) * dt_eff)
            states.append(w.copy())
            viol.append(worst)
            worst = 0.0
    return Trajectory(times=np.array(times), states=np.array(states), x=x.copy(), dt=dt_eff,
                      box_violation=np.array(viol), boundary_mode=spec.boundary_mode)


# ---------------------------------------------------------------- comparison

def _interp_axis(values, src, dst, axis):
    pos = np.clip(np.searchsorted(src, dst, side="right") - 1, 0, len(src) - 2)
    w = np.clip((dst - src[pos]) / (src[pos + 1] - src[pos]), 0.0, 1.0)
    shape = [1] * values.ndim
    shape[axis] = -1
    w = w.reshape(shape)
    return np.take(values, pos, axis=axis) * (1 - w) + np.take(values, pos + 1, axis=axis) * w


def _as_time_major(item):
    """(times, x, values (n_t, k, N+1)) for a MinimizeResult or a Trajectory."""
    if isinstance(item, Trajectory):
        return item.times, item.x, item.states
    grid = item.grid
    if grid.dim != 1:
        raise ValueError("comparison is 1D only")
    return grid.t_nodes, grid.x_nodes[0], np.moveaxis(item.v, 1, 0)


def compare_wide_vs_parabolic(min_results, traj: Trajectory, T) -> np.ndarray:
    """L2(Omega x (0, T)) distances between each field and the trajectory.

    Each field is linearly interpolated onto the trajectory's (t, x) nodes in
    [0, T]; the integral is a tensor trapezoid rule.
    """
    idx = traj.window(0.0, T)
    t_ref = traj.times[idx]
    x_ref = traj.x
    w_ref = traj.states[idx]
    q = traj.node_weights
    out = []
    for item in min_results:
        times, x, vals = _as_time_major(item)
        if not (np.isclose(x[0], x_ref[0]) and np.isclose(x[-1], x_ref[-1])):
            raise ValueError("incompatible spatial domains")
        if vals.shape[1] != w_ref.shape[1]:
            raise ValueError("species counts differ")
        if times[-1] < T * (1 - 1e-12):
            raise ValueError(f"field horizon {times[-1]} is shorter than T = {T}")
        v = _interp_axis(vals, times, t_ref, 0)
        if x.size != x_ref.size or not np.allclose(x, x_ref, rtol=0, atol=1e-14):
            v = _interp_axis(v, x, x_ref, 2)
        diff2 = np.sum((v - w_ref) ** 2, axis=1) @ q
        out.append(math.sqrt(max(0.0, float(np.trapezoid(diff2, t_ref)))))
    return np.array(out)
