"""A priori constants, windowed interior integrals, Hoelder quotient and segregation measures."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .grid import Grid
from .parabolic import Trajectory
from .problem import ProblemSpec, reaction

HOLDER_MAX_NODES = 2048


@dataclass(frozen=True)
class BoundConstants:
    M1: float
    M2: float
    M3: float
    M_tilde1: float
    M_tilde2: float
    D3: float
    R1: float
    k: int
    volume: float
    grad_v0_sq: float
    mu: Optional[float] = None
    D4: Optional[float] = None

    def c_tilde(self, T):
        """Bound on (1/eps) int_0^T I_eps dt."""
        C, m1, m2 = self.M3, self.M_tilde1, self.M_tilde2
        return 0.5 * (C + m1 + m1 / m2) * math.exp((m2 + self.D3) * T)

    def c_tilde2(self, T):
        C, m1, m2, d3 = self.M3, self.M_tilde1, self.M_tilde2, self.D3
        return ((1 + d3) * (C + m1 / m2) / (m2 + d3) * math.exp((m2 + d3) * T)
                + 2 * m1 / m2 * math.exp(m2 * T) + self.c_tilde(T))

    def C_bar(self, T):
        """Uniform bound constant; None unless both mu and D4 are configured."""
        if self.mu is None or self.D4 is None:
            return None
        return max(self.c_tilde(T) / self.R1, self.c_tilde2(T), self.k * self.volume * T)


def discrete_grad_sq_norm(profiles, grid: Grid):
    """sum_i int |grad_h v_i|^2 with the cell/edge rule of the functional."""
    total = 0.0
    for p in profiles:
        if grid.dim == 1:
            total += float(np.sum(np.diff(p) ** 2) / grid.h[0])
        else:
            qx, qy = (np.full(n + 1, hh) for n, hh in zip(grid.N, grid.h))
            qx[[0, -1]] *= 0.5
            qy[[0, -1]] *= 0.5
            total += float(np.sum(np.diff(p, axis=0) ** 2 * qy[None, :]) / grid.h[0])
            total += float(np.sum(np.diff(p, axis=1) ** 2 * qx[:, None]) / grid.h[1])
    return total


def bound_constants(spec: ProblemSpec, grid: Grid) -> BoundConstants:
    g = spec.growth
    k = spec.k
    nU2 = spec.norm_U2()
    nU13 = spec.norm_U1U3()
    v0 = [spec.initial_profile(i, grid.x_nodes) for i in range(k)]
    gv = discrete_grad_sq_norm(v0, grid)
    M1 = 4 * k * g.H1 * nU2
    M2 = 2 * (g.D1 * gv + 2 * k * g.H1 * nU2 + k * k * g.C1 * g.A1 * nU13 / 2)
    Mt1 = 4 * (g.D3 + 1) * k * g.H1 * nU2 + 2 * k * k * g.C1 * g.A1 * nU13
    Mt2 = g.A2 + g.C2 + g.H2 + 1
    return BoundConstants(M1=M1, M2=M2, M3=M1 + M2, M_tilde1=Mt1, M_tilde2=Mt2, D3=g.D3, R1=g.R1,
                          k=k, volume=spec.volume, grad_v0_sq=gv, mu=spec.mu, D4=spec.D4)


# ------------------------------------------------------------ interior integrals

def cutoff_grad_sq(delta, dim=1):
    """|| grad gamma_delta ||^2 for the piecewise-linear cutoff (1D: 4/delta)."""
    if dim != 1:
        raise ValueError("closed form available in 1D only")
    return 4.0 / delta


def C_delta(spec: ProblemSpec, delta):
    return 2 * spec.growth.R2 * spec.volume + 4 * cutoff_grad_sq(delta, spec.dim) + 2


def C_delta_tau(spec: ProblemSpec, delta, tau):
    """Window bound independent of T; meaningful when D2 = H2 = 0."""
    g = spec.growth
    return C_delta(spec, delta) * (1 + g.D1 * tau + g.H1 * spec.norm_U2() * tau)


def _interior_cells(x, delta):
    lo, hi = x[0], x[-1]
    mid = 0.5 * (x[:-1] + x[1:])
    return (mid - lo > delta) & (hi - mid > delta)


def _product_density(states, t, spec, i, x):
    """beta w_i^2 sum_{j != i} a_ij w_j^2 at nodes, shape (n_t, N + 1)."""
    out = np.zeros(states.shape[:1] + x.shape)
    if spec.a_is_zero:
        return out
    T = t[:, None]
    beta = np.broadcast_to(spec.beta(t=T, x=x[None]), out.shape)
    for j in range(spec.k):
        if j != i and not spec.a[i][j].is_zero:
            aij = np.broadcast_to(spec.a[i][j](t=T, x=x[None]), out.shape)
            out += aij * states[:, j] ** 2
    return beta * states[:, i] ** 2 * out


def _cell_integral(node_vals, x, cells):
    h = np.diff(x)
    return (0.5 * (node_vals[..., :-1] + node_vals[..., 1:]) * h)[..., cells].sum(axis=-1)


def lemma_sq_integral(traj: Trajectory, spec: ProblemSpec, i, T, tau, delta):
    """Windowed interior integral and its closed-form bound.

    value = int_T^{T+tau} int_{Omega_delta} d_i |grad w_i|^2 + beta w_i^2 sum_j a_ij w_j^2,
    with cells of Omega_delta selected by their midpoints.
    bound = C_delta (1 + int d_i dt + int int |f_i(t, x, w_i)|).
    """
    x = traj.x
    lo, hi = x[0], x[-1]
    if not 0 < delta < 0.5 * (hi - lo):
        raise ValueError("delta must lie in (0, half the width of Omega)")
    if not tau > 0:
        raise ValueError("tau must be positive")
    idx = traj.window(T, T + tau)
    if len(idx) < 2:
        raise ValueError("window holds fewer than two recorded times")
    t = traj.times[idx]
    w = traj.states[idx]
    cells = _interior_cells(x, delta)
    d = np.broadcast_to(spec.d[i](t=t), t.shape)
    grad = (np.diff(w[:, i], axis=1) ** 2 / np.diff(x))[:, cells].sum(axis=1)
    prod = _cell_integral(_product_density(w, t, spec, i, x), x, cells)
    value = float(np.trapezoid(d * grad + prod, t))
    q = traj.node_weights
    f_abs = np.abs(reaction(spec, i, t[:, None], x[None], w[:, i])) @ q
    bound = C_delta(spec, delta) * (1 + float(np.trapezoid(d, t)) + float(np.trapezoid(f_abs, t)))
    return value, bound


# ----------------------------------------------------------------- Hoelder

def holder_quotient(traj: Trajectory, max_nodes=HOLDER_MAX_NODES):
    """(sup over pairs of ||w(t2) - w(t1)|| / |t2 - t1|^{1/2}, C_hat).

    C_hat = sum_n ||w_{n+1} - w_n||^2 / (t_{n+1} - t_n) uses every recorded
    state.  The pairwise maximum runs over at most ``max_nodes`` evenly spaced
    states (all of them when fewer); a subset can only lower the maximum.
    """
    times = traj.times
    if len(times) < 3:
        raise ValueError("need at least three recorded times")
    q = traj.node_weights
    k = traj.k
    flat = traj.states.reshape(len(times), -1)
    weights = np.tile(q, k)
    inc = np.diff(flat, axis=0)
    C_hat = float(np.sum((inc * inc) @ weights / np.diff(times)))
    if len(times) > max_nodes:
        sel = np.unique(np.linspace(0, len(times) - 1, max_nodes).round().astype(int))
    else:
        sel = np.arange(len(times))
    sup = _kernels.holder_max(times[sel], flat[sel], weights)
    return sup, C_hat


# --------------------------------------------------------------- segregation

@dataclass
class SegregationTrace:
    times: np.ndarray
    S: np.ndarray
    S_beta: np.ndarray
    windows: list = field(default_factory=list)


def segregation_trace(traj: Trajectory, spec: ProblemSpec, delta=0.1, window_starts: Sequence[float] = (),
                      tau=1.0) -> SegregationTrace:
    """S(t) = int sum_{i != j} a_ij w_i^2 w_j^2 and its beta-weighted variant.

    Each unordered pair is counted through a_ij + a_ji.  For each window start
    T (when b_lower and mu_bar are configured) the entry records the window
    mean of S, the per-species beta-weighted interior integrals, the bound
    C_{delta,1} and the values C_{delta,1}/inf b and 4 C_{delta,1}/inf b.
    """
    x = traj.x
    t = traj.times
    q = traj.node_weights
    w = traj.states
    T = t[:, None]
    pair = np.zeros((len(t),) + x.shape)
    for i in range(spec.k):
        for j in range(spec.k):
            if i != j and not spec.a[i][j].is_zero:
                aij = np.broadcast_to(spec.a[i][j](t=T, x=x[None]), pair.shape)
                pair += aij * w[:, i] ** 2 * w[:, j] ** 2
    beta = np.broadcast_to(spec.beta(t=T, x=x[None]), pair.shape)
    S = pair @ q
    S_beta = (beta * pair) @ q
    out = SegregationTrace(times=t.copy(), S=S, S_beta=S_beta)
    if spec.b_lower is None or spec.mu_bar is None:
        return out
    c1 = C_delta_tau(spec, delta, tau)
    cells = _interior_cells(x, delta)
    for T0 in window_starts:
        idx = traj.window(T0, T0 + tau)
        tw = t[idx]
        b = np.broadcast_to(spec.b_lower(t=np.linspace(T0, T0 + tau, 1001)), (1001,))
        inf_b = float(np.min(b))
        per_species = [float(np.trapezoid(_cell_integral(_product_density(w[idx], tw, spec, i, x), x, cells), tw))
                       for i in range(spec.k)]
        out.windows.append({
            "T": float(T0),
            "tau": float(tau),
            "mean_S": float(np.trapezoid(S[idx], tw) / tau),
            "beta_product": per_species,
            "C_delta_1": c1,
            "inf_b": inf_b,
            "bound_over_inf_b": c1 / inf_b if inf_b > 0 else math.inf,
            "level_set_bound": 4 * c1 / inf_b if inf_b > 0 else math.inf,
        })
    return out
