"""Box-constrained minimization of the discrete functional and continuation in eps.

The iteration is a two-metric projected method: on free nodes that are not
held at a bound the step is a Newton-like direction built from the exact
sparse Hessian of the quadratic terms plus the diagonal of the coupling and
reaction terms; nodes held at a bound by their gradient get a diagonally
scaled gradient step.  The trial point is projected onto the admissible set
and accepted under an Armijo condition along the projection arc.  Function
decreases are assembled from exact increments, so the recorded history is
monotone even when the decrease is far below the size of F.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import NumericsError
from .functional import WideFunctional, wide_functional
from .grid import Grid, truncation_horizon
from .problem import ProblemSpec, check_epsilon, epsilon_bar, growth_rate, reaction

log = logging.getLogger(__name__)

STEP_FLOOR = 1e-16


@dataclass(frozen=True)
class MinimizeOptions:
    max_iters: int = 200
    grad_tol: float = 1e-8
    armijo_c: float = 1e-4
    backtrack_factor: float = 0.5
    init_step: float = 1.0
    refactor_every: int = 5  # iterations between Hessian refactorizations

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.grad_tol > 0 or not self.init_step > 0:
            raise ValueError("grad_tol and init_step must be positive")
        if not 0 < self.armijo_c < 1 or not 0 < self.backtrack_factor < 1:
            raise ValueError("armijo_c and backtrack_factor must lie in (0, 1)")
        if self.refactor_every < 1:
            raise ValueError("refactor_every must be >= 1")


@dataclass
class MinimizeResult:
    v: np.ndarray
    F_value: float
    iters: int
    final_pg_norm: float
    converged: bool
    F_history: np.ndarray
    eps: float
    grid: Grid
    raw_pg_norm: float = float("nan")
    message: str = ""


def project_admissible(v, spec: ProblemSpec, grid: Grid) -> np.ndarray:
    """Clamp to [0, 1], then pin the initial slice and (if set) the Dirichlet trace."""
    out = np.clip(np.asarray(v, dtype=float), 0.0, 1.0)
    v0 = np.stack([spec.initial_profile(i, grid.x_nodes) for i in range(spec.k)])
    out[:, 0] = v0
    if spec.boundary_mode == "dirichlet_trace":
        mask = grid.boundary_mask
        out[:, :, mask] = v0[:, None, mask]
    return out


# ------------------------------------------------------------- Hessian model

def _edge_hessian(fn: WideFunctional, i):
    """Exact Hessian of the kinetic + gradient terms of species i (all nodes)."""
    g = fn.grid
    S = g.spatial_shape
    P = int(np.prod(S))
    n_all = (g.M + 1) * P
    idx = np.arange(n_all).reshape((g.M + 1,) + S)
    rows, cols, wts = [], [], []
    # kinetic edges (n, p) -- (n + 1, p)
    w = fn.kin_w.reshape((-1,) + (1,) * g.dim) * (fn.r[i] * fn.q)
    rows.append(idx[:-1].ravel()); cols.append(idx[1:].ravel()); wts.append(w.ravel())
    wd = fn.W * fn.d[i, :-1]
    for ax in range(g.dim):
        sl_a = [slice(None)] * (g.dim + 1)
        sl_b = [slice(None)] * (g.dim + 1)
        sl_a[0] = sl_b[0] = slice(0, g.M)
        sl_a[ax + 1] = slice(0, -1)
        sl_b[ax + 1] = slice(1, None)
        if g.dim == 1:
            c = np.full(S[0] - 1, 1.0 / g.h[0])
        else:
            c = fn.edge_c[ax]
            c = np.broadcast_to(c, idx[0][tuple(sl_a[1:])].shape)
        w = wd.reshape((-1,) + (1,) * g.dim) * c
        rows.append(idx[tuple(sl_a)].ravel()); cols.append(idx[tuple(sl_b)].ravel()); wts.append(w.ravel())
    r = np.concatenate(rows); c = np.concatenate(cols); w = 2.0 * np.concatenate(wts)
    diag = np.bincount(r, w, n_all) + np.bincount(c, w, n_all)
    H = sp.coo_matrix((np.concatenate([-w, -w, diag]),
                       (np.concatenate([r, c, np.arange(n_all)]), np.concatenate([c, r, np.arange(n_all)]))),
                      shape=(n_all, n_all)).tocsr()
    return H


def _potential_diag(fn: WideFunctional, v):
    """Nonnegative diagonal model of the node terms' Hessian, shape of v."""
    out = np.zeros_like(v)
    spec = fn.spec
    wq = fn.wq
    if fn.coupled:
        p = v[:, :-1] ** 2
        out[:, :-1] += wq[None] * np.einsum("ij...,j...->i...", fn.ba_sym[:, :, :-1], p)
    if not spec.f_is_zero:
        h = 1e-6
        T = fn.T_b[:-1]
        for i in range(spec.k):
            vi = v[i, :-1]
            df = (reaction(spec, i, T, fn.X, vi + h) - reaction(spec, i, T, fn.X, vi - h)) / (2 * h)
            out[i, :-1] += wq * np.maximum(0.0, -2.0 * df)
    return out


class _NewtonModel:
    def __init__(self, fn: WideFunctional):
        self.fn = fn
        self.H = [_edge_hessian(fn, i) for i in range(fn.spec.k)]
        self.free = ~fn.pinned.ravel()
        self.lu = None
        self.key = None
        self.age = 0

    def factor(self, v, inactive):
        """(Re)build per-species factorizations over the inactive free nodes."""
        pdiag = _potential_diag(self.fn, v)
        self.lu = []
        self.scale = []
        self.idx = []
        for i, H in enumerate(self.H):
            sel = np.flatnonzero(inactive[i].ravel())
            self.idx.append(sel)
            if sel.size == 0:
                self.lu.append(None)
                self.scale.append(None)
                continue
            A = H[sel][:, sel] + sp.diags(pdiag[i].ravel()[sel])
            dg = A.diagonal()
            dg = np.where(dg > 0, dg, 1.0)
            D = 1.0 / np.sqrt(dg)
            A = sp.diags(D) @ A @ sp.diags(D)
            self.lu.append(spla.splu(A.tocsc()))
            self.scale.append(D)
        self.full_diag = np.stack([H.diagonal().reshape(v.shape[1:]) for H in self.H]) + pdiag
        self.key = inactive.copy()
        self.age = 0

    def direction(self, G, inactive, active):
        d = np.zeros_like(G)
        for i in range(len(self.H)):
            sel = self.idx[i]
            if sel.size:
                D = self.scale[i]
                y = self.lu[i].solve(D * G[i].ravel()[sel])
                di = d[i].ravel()
                di[sel] = -D * y
                d[i] = di.reshape(d[i].shape)
        dg = np.where(self.full_diag > 0, self.full_diag, 1.0)
        d[active] = -G[active] / dg[active]
        return d


def _project_fast(v, fn: WideFunctional):
    out = np.clip(v, 0.0, 1.0)
    out[:, fn.pinned] = fn.admissible_template()[:, fn.pinned]
    return out


def minimize(spec: ProblemSpec, grid: Grid, eps: float, init="constant-in-time-v0",
             opts: Optional[MinimizeOptions] = None) -> MinimizeResult:
    """Minimize the discrete F_eps over the admissible box.

    ``init`` is a field (projected before use) or "constant-in-time-v0".
    Convergence is declared when the sup-norm of the projected Newton-like
    step, P(v + d) - v, drops to ``grad_tol``.
    """
    opts = opts or MinimizeOptions()
    check_epsilon(spec, eps)
    fn = wide_functional(spec, grid, eps)
    if isinstance(init, str):
        if init != "constant-in-time-v0":
            raise ValueError(f"unknown init {init!r}")
        v = project_admissible(fn.admissible_template(), spec, grid)
    else:
        v = project_admissible(init, spec, grid)
    pinned = np.broadcast_to(fn.pinned, v.shape)
    free = ~pinned

    F, G = fn.value_and_gradient(v)
    history = [F]
    model = _NewtonModel(fn)
    step = opts.init_step
    measure = float("inf")
    converged = False
    message = "max_iters reached"
    iters = 0
    for it in range(opts.max_iters + 1):
        raw = float(np.max(np.abs(_project_fast(v - G, fn) - v)))
        tol_act = min(1e-6, raw)
        at_lo = (v <= tol_act) & (G > 0)
        at_hi = (v >= 1.0 - tol_act) & (G < 0)
        active = free & (at_lo | at_hi)
        inactive = free & ~active
        if model.key is None or model.age >= opts.refactor_every or not np.array_equal(inactive, model.key):
            model.factor(v, inactive)
        model.age += 1
        d = model.direction(G, inactive, active)
        d[pinned] = 0.0
        trial_full = _project_fast(v + d, fn)
        measure = float(np.max(np.abs(trial_full - v)))
        if measure <= opts.grad_tol:
            converged = True
            message = "converged"
            break
        if it == opts.max_iters:
            break
        iters = it + 1
        s = step
        gq = fn.quad_gradient(v)
        accepted = False
        fallback = False
        while s >= STEP_FLOOR:
            trial = _project_fast(v + s * d, fn)
            dv = trial - v
            slope = float(np.sum(G * dv))
            if slope >= 0:
                if not fallback:
                    # Newton-like direction is not a descent direction here; use the scaled gradient
                    dg = np.where(model.full_diag > 0, model.full_diag, 1.0)
                    d = np.where(free, -G / dg, 0.0)
                    fallback = True
                    s = step
                    continue
                s *= opts.backtrack_factor
                continue
            dF = fn.increment(v, dv, gq)
            if not math.isfinite(dF):
                raise NumericsError("non-finite functional value during line search", iterate=trial)
            if dF <= opts.armijo_c * slope:
                accepted = True
                break
            s *= opts.backtrack_factor
        if not accepted:
            message = "step underflow"
            break
        v = trial
        history.append(history[-1] + dF)
        F, G = fn.value_and_gradient(v, check=False)
        if fallback:
            model.age = opts.refactor_every
        log.debug("iter %d  F=%.16g  step=%.3g  measure=%.3e", it, history[-1], s, measure)

    F_value = fn.value(v)
    raw = float(np.max(np.abs(_project_fast(v - G, fn) - v)))
    return MinimizeResult(v=v, F_value=F_value, iters=iters, final_pg_norm=measure,
                          converged=converged, F_history=np.array(history), eps=float(eps),
                          grid=grid, raw_pg_norm=raw, message=message)


# ---------------------------------------------------------------- continuation

def default_grid_builder(spec: ProblemSpec, N, horizon_tol=1e-10, dt_factor=1.0 / 16.0, T_min=0.0):
    """Grid per eps: horizon from the weight tail, dt = dt_factor * eps (<= eps/4)."""
    if not 0 < dt_factor <= 0.25:
        raise ValueError("dt_factor must lie in (0, 1/4]")
    c = growth_rate(spec.growth)
    Ns = (N,) * spec.dim if np.ndim(N) == 0 else tuple(N)

    def build(eps):
        T = max(truncation_horizon(eps, c, horizon_tol), T_min)
        M = max(2, int(math.ceil(T / (dt_factor * eps) - 1e-9)))
        return Grid(spec.domain, Ns, T, M)

    return build


def interpolate_field(v, src: Grid, dst: Grid):
    """Multilinear interpolation of a field onto another grid of the same domain.

    Times beyond the source horizon take the last source slice.
    """
    v = np.asarray(v, dtype=float)
    if src.bounds != dst.bounds:
        raise ValueError("grids cover different domains")
    out = v
    axes = [(src.t_nodes, dst.t_nodes)] + list(zip(src.x_nodes, dst.x_nodes))
    for ax, (xs, xd) in enumerate(axes):
        if len(xs) == len(xd) and np.array_equal(xs, xd):
            continue
        pos = np.clip(np.searchsorted(xs, xd, side="right") - 1, 0, len(xs) - 2)
        w = np.clip((xd - xs[pos]) / (xs[pos + 1] - xs[pos]), 0.0, 1.0)
        shape = [1] * out.ndim
        shape[ax + 1] = -1
        w = w.reshape(shape)
        out = np.take(out, pos, axis=ax + 1) * (1 - w) + np.take(out, pos + 1, axis=ax + 1) * w
    return out


def continuation_in_eps(spec: ProblemSpec, grid_builder: Callable[[float], Grid], eps_list: Sequence[float],
                        opts: Optional[MinimizeOptions] = None):
    """Minimize for each eps in a strictly decreasing list, warm-starting each run."""
    eps_list = [float(e) for e in eps_list]
    if not eps_list:
        raise ValueError("eps_list is empty")
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps_list must be strictly decreasing")
    eb = epsilon_bar(spec.growth)
    for e in eps_list:
        if not 0 < e < eb:
            raise ValueError(f"epsilon = {e!r} is outside (0, epsilon_bar) with "
                             f"epsilon_bar = 1/(2(A2+H2+C2+D2+1)) = {eb!r}")
    results = []
    prev = None
    for eps in eps_list:
        grid = grid_builder(eps)
        if grid.dt > eps / 4 * (1 + 1e-12):
            raise ValueError(f"grid for eps={eps} has dt={grid.dt} > eps/4")
        if prev is None:
            init = "constant-in-time-v0"
        else:
            init = interpolate_field(prev.v, prev.grid, grid)
        res = minimize(spec, grid, eps, init, opts)
        results.append(res)
        prev = res
    return results
