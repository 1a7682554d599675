"""The discrete weighted space-time functional, its exact gradient and energy traces.

Discrete form, with W_n the exact weight mass of interval n, q the trapezoid
node weights and every node term sampled at the left end t_n (n < M)::

    F = sum_n W_n { eps sum_i <q r_i, (D_t v_i)^2>
                    + sum_i d_i(t_n) |grad_h v_i(t_n)|^2
                    + <q, -2 sum_i F_i(t_n, x, v_i) + beta/2 sum_ij a_ij v_i^2 v_j^2> }

so that the gradient is an exact summation by parts of the same sums.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels
from .errors import AdmissibilityError, NumericsError
from .grid import Grid, check_field
from .problem import ProblemSpec, _centered_dt, check_epsilon, primitive, primitive_increment, reaction


class WideFunctional:
    """F_eps for one (spec, grid, eps) with all v-independent data sampled once."""

    def __init__(self, spec: ProblemSpec, grid: Grid, eps: float):
        if spec.dim != grid.dim:
            raise ValueError("grid and problem dimensions differ")
        for (a, b), (c, d) in zip(spec.domain, grid.bounds):
            if a != c or b != d:
                raise ValueError("grid bounds differ from the problem domain")
        check_epsilon(spec, eps)
        self.spec, self.grid, self.eps = spec, grid, float(eps)
        k, M = spec.k, grid.M
        S = grid.spatial_shape
        self.t = grid.t_nodes
        self.X = grid.mesh[0]
        self.T_b = self.t.reshape((-1,) + (1,) * grid.dim)  # broadcasts against (M+1, *S)
        self.W = grid.interval_weights(eps)
        self.q = grid.node_weights
        self.r = np.stack([np.broadcast_to(spec.r[i](x=self.X), S) for i in range(k)])
        self.d = np.stack([np.broadcast_to(spec.d[i](t=self.t), self.t.shape) for i in range(k)])
        full = (M + 1,) + S
        self.beta = np.array(np.broadcast_to(spec.beta(t=self.T_b, x=self.X), full))
        a = np.zeros((k, k) + full)
        for i in range(k):
            for j in range(k):
                if not spec.a[i][j].is_zero:
                    a[i, j] = np.broadcast_to(spec.a[i][j](t=self.T_b, x=self.X), full)
        self.a = a
        self.ba_sym = self.beta[None, None] * (a + a.transpose(1, 0, *range(2, a.ndim)))
        self.coupled = not spec.a_is_zero
        self.v0 = np.stack([spec.initial_profile(i, grid.x_nodes) for i in range(k)])
        self.pinned = np.zeros(full, dtype=bool)
        self.pinned[0] = True
        if spec.boundary_mode == "dirichlet_trace":
            self.pinned[:, grid.boundary_mask] = True
        # per-interval quadratic weights
        self.kin_w = self.eps * self.W / grid.dt ** 2
        self.wq = self.W.reshape((-1,) + (1,) * grid.dim) * self.q  # (M, *S)
        if grid.dim == 2:
            hx, hy = grid.h
            qx, qy = (np.full(n + 1, hh) for n, hh in zip(grid.N, grid.h))
            qx[[0, -1]] *= 0.5
            qy[[0, -1]] *= 0.5
            self.edge_c = (qy[None, :] / hx, qx[:, None] / hy)

    # ------------------------------------------------------------ checks

    def admissible_template(self):
        """Constant-in-time extension of v0."""
        return np.repeat(self.v0[:, None], self.grid.M + 1, axis=1)

    def check(self, v):
        v = check_field(v, self.grid, self.spec.k)
        if not np.array_equal(v[:, 0], self.v0):
            raise AdmissibilityError("initial slice differs from v0")
        if self.spec.boundary_mode == "dirichlet_trace":
            trace = v[:, :, self.grid.boundary_mask]
            if not np.array_equal(trace, np.broadcast_to(self.v0[:, None, self.grid.boundary_mask], trace.shape)):
                raise AdmissibilityError("boundary trace differs from g")
        return v

    # ------------------------------------------------------ quadratic part

    def _quad(self, vi, i):
        """Energy and gradient of kinetic + gradient terms of species i."""
        g = self.grid
        if g.dim == 1:
            rq = self.r[i] * self.q
            grad_w = self.W * self.d[i, :-1] / g.h[0]
            return _kernels.quad_terms_1d(vi, rq, self.kin_w, grad_w)
        rq = self.r[i] * self.q
        dv_t = np.diff(vi, axis=0)
        kin = self.kin_w[:, None, None] * rq[None] * dv_t
        e = float(np.sum(kin * dv_t))
        G = np.zeros_like(vi)
        G[:-1] -= 2 * kin
        G[1:] += 2 * kin
        wd = (self.W * self.d[i, :-1])[:, None, None]
        for ax in range(2):
            dv = np.diff(vi[:-1], axis=ax + 1)
            c = wd * self.edge_c[ax] * dv
            e += float(np.sum(c * dv))
            if ax == 0:
                G[:-1, :-1, :] -= 2 * c
                G[:-1, 1:, :] += 2 * c
            else:
                G[:-1, :, :-1] -= 2 * c
                G[:-1, :, 1:] += 2 * c
        return e, G

    def quad_energy(self, v):
        return sum(self._quad(v[i], i)[0] for i in range(self.spec.k))

    # ------------------------------------------------------ potential part

    def _potential_density(self, v):
        """Node density -2 sum F_i + beta/2 <v^2, A v^2> on n < M, shape (M, *S)."""
        vm = v[:, :-1]
        T = self.T_b[:-1]
        dens = np.zeros(vm.shape[1:])
        if not self.spec.f_is_zero:
            for i in range(self.spec.k):
                dens -= 2.0 * primitive(self.spec, i, T, self.X, vm[i])
        if self.coupled:
            p = vm * vm
            ap = np.einsum("ij...,j...->i...", self.a[:, :, :-1], p)
            dens += 0.5 * self.beta[:-1] * np.einsum("i...,i...->...", p, ap)
        return dens

    def _potential_grad(self, v):
        vm = v[:, :-1]
        T = self.T_b[:-1]
        G = np.zeros_like(vm)
        if not self.spec.f_is_zero:
            for i in range(self.spec.k):
                G[i] -= 2.0 * reaction(self.spec, i, T, self.X, vm[i])
        if self.coupled:
            p = vm * vm
            G += vm * np.einsum("ij...,j...->i...", self.ba_sym[:, :, :-1], p)
        return G

    # ------------------------------------------------------------ public

    def value(self, v, check=True):
        if check:
            v = self.check(v)
        total = self.quad_energy(v)
        if not (self.spec.f_is_zero and not self.coupled):
            total += float(np.sum(self.wq * self._potential_density(v)))
        if not np.isfinite(total):
            raise NumericsError("non-finite functional value", iterate=v)
        return total

    def gradient(self, v, check=True):
        if check:
            v = self.check(v)
        G = np.zeros_like(v)
        for i in range(self.spec.k):
            G[i] = self._quad(v[i], i)[1]
        if not (self.spec.f_is_zero and not self.coupled):
            G[:, :-1] += self.wq[None] * self._potential_grad(v)
        return G

    def value_and_gradient(self, v, check=True):
        if check:
            v = self.check(v)
        G = np.zeros_like(v)
        total = 0.0
        for i in range(self.spec.k):
            e, G[i] = self._quad(v[i], i)
            total += e
        if not (self.spec.f_is_zero and not self.coupled):
            total += float(np.sum(self.wq * self._potential_density(v)))
            G[:, :-1] += self.wq[None] * self._potential_grad(v)
        if not np.isfinite(total):
            raise NumericsError("non-finite functional value", iterate=v)
        return total, G

    def increment(self, v, dv, grad_quad=None):
        """F(v + dv) - F(v) assembled from exact increments, free of cancellation.

        ``grad_quad`` is the gradient of the quadratic part at v, if known.
        """
        k = self.spec.k
        out = 0.0
        for i in range(k):
            gq = grad_quad[i] if grad_quad is not None else self._quad(v[i], i)[1]
            out += float(np.sum(gq * dv[i])) + self._quad(dv[i], i)[0]
        vm, dm = v[:, :-1], dv[:, :-1]
        T = self.T_b[:-1]
        dens = np.zeros(vm.shape[1:])
        if not self.spec.f_is_zero:
            for i in range(k):
                dens -= 2.0 * primitive_increment(self.spec, i, T, self.X, vm[i], vm[i] + dm[i])
        if self.coupled:
            p = vm * vm
            dp = dm * (2.0 * vm + dm)
            a = self.a[:, :, :-1]
            cross = np.einsum("ij...,i...,j...->...", a, p, dp) + np.einsum("ij...,i...,j...->...", a, dp, p)
            quad = np.einsum("ij...,i...,j...->...", a, dp, dp)
            dens += 0.5 * self.beta[:-1] * (cross + quad)
        out += float(np.sum(self.wq * dens))
        return out

    def quad_gradient(self, v):
        G = np.zeros_like(v)
        for i in range(self.spec.k):
            G[i] = self._quad(v[i], i)[1]
        return G


_CACHE: dict = {}


def wide_functional(spec, grid, eps) -> WideFunctional:
    """Cached constructor: repeated calls with the same objects reuse the sampling."""
    key = (id(spec), grid, float(eps))
    hit = _CACHE.get(key)
    if hit is not None and hit.spec is spec:
        return hit
    if len(_CACHE) > 8:
        _CACHE.clear()
    fn = WideFunctional(spec, grid, eps)
    _CACHE[key] = fn
    return fn


def evaluate_F_eps(v, spec, grid, eps) -> float:
    return wide_functional(spec, grid, eps).value(v)


def gradient_F_eps(v, spec, grid, eps) -> np.ndarray:
    """Exact gradient of :func:`evaluate_F_eps` with respect to every node value.

    Entries at pinned nodes are included; the minimizer masks them.
    """
    return wide_functional(spec, grid, eps).gradient(v)


def el_residual(v, spec, grid, eps) -> np.ndarray:
    """Strong-form Euler-Lagrange residual with centred differences.

    -eps r v_tt + r v_t - d(t) lap v - f(t, x, v) + beta v sum_j a_ij v_j^2 at
    nodes interior in time (0 < n < M) and space; zero elsewhere.
    """
    fn = wide_functional(spec, grid, eps)
    v = check_field(v, grid, spec.k)
    dt = grid.dt
    out = np.zeros_like(v)
    inner = (slice(1, -1),) * grid.dim
    T = fn.T_b[1:-1]
    for i in range(spec.k):
        vi = v[i]
        vc = vi[1:-1]
        v_tt = (vi[2:] - 2 * vc + vi[:-2]) / dt ** 2
        v_t = (vi[2:] - vi[:-2]) / (2 * dt)
        lap = np.zeros_like(vc)
        for ax, h in enumerate(grid.h):
            lap += (np.roll(vc, -1, axis=ax + 1) - 2 * vc + np.roll(vc, 1, axis=ax + 1)) / h ** 2
        r = fn.r[i]
        res = -eps * r * v_tt + r * v_t - fn.d[i, 1:-1].reshape((-1,) + (1,) * grid.dim) * lap
        res -= reaction(spec, i, T, fn.X, vc)
        if fn.coupled:
            coup = np.zeros_like(vc)
            for j in range(spec.k):
                if j != i:
                    coup += fn.a[i, j, 1:-1] * v[j, 1:-1] ** 2
            res += fn.beta[1:-1] * vc * coup
        out[i, 1:-1][(slice(None),) + inner] = res[(slice(None),) + inner]
    return out


# ---------------------------------------------------------------- energies

@dataclass
class EnergyReport:
    times: np.ndarray
    F_eps: float
    I: np.ndarray
    R: np.ndarray
    E: np.ndarray
    Q: np.ndarray
    ode_residual: np.ndarray
    eps: float
    constants: Optional[object] = field(default=None)

    def q_bound_excess(self, D3, Mt1, Mt2, tol=0.0):
        """max_n |Q[n]| - (D3 E[n] + Mt1 e^{Mt2 t_n} + tol); <= 0 when the bound holds."""
        bound = D3 * self.E + Mt1 * np.exp(Mt2 * self.times) + tol
        return float(np.max(np.abs(self.Q) - bound))

    def integral_I(self, T):
        """int_0^T I dt by the left-endpoint rule on the report's time nodes."""
        dt = self.times[1] - self.times[0]
        n = int(round(T / dt))
        if n > len(self.times) - 1 or n < 0:
            raise ValueError("T outside the report's time range")
        return float(np.sum(self.I[:n]) * dt)


def _tail_accumulate(g, a):
    """E[n] = (1 - e^{-a}) g[n] + e^{-a} E[n+1], E[M] = 0."""
    decay = np.exp(-a)
    mass = -np.expm1(-a)
    E = np.zeros_like(g)
    for n in range(len(g) - 2, -1, -1):
        E[n] = mass * g[n] + decay * E[n + 1]
    return E


def _grad_sq_integral(fn, vi):
    """int_Omega |grad_h vi(t_n)|^2 for every time node, shape (M+1,)."""
    g = fn.grid
    if g.dim == 1:
        return np.sum(np.diff(vi, axis=1) ** 2, axis=1) / g.h[0]
    out = np.zeros(vi.shape[0])
    for ax in range(2):
        dv = np.diff(vi, axis=ax + 1)
        out += np.sum(fn.edge_c[ax][None] * dv * dv, axis=(1, 2))
    return out


def energy_traces(v, spec, grid, eps, constants=None) -> EnergyReport:
    """Per-node traces of I, R, E, Q and the residual of E' = (-I - R + E)/eps.

    E and Q are tail integrals over the truncated horizon, accumulated
    backwards with the exact per-interval weight, so E[0] reproduces F_eps.
    The time derivatives of d, f, beta and a_ij are centred finite differences
    (step 1e-5, one-sided at t = 0).
    """
    fn = wide_functional(spec, grid, eps)
    v = fn.check(v)
    k, M, dt = spec.k, grid.M, grid.dt
    q = fn.q
    sq = lambda arr: np.tensordot(arr, q, axes=(tuple(range(1, arr.ndim)), tuple(range(q.ndim))))
    t = fn.t
    T = fn.T_b

    dvt = np.diff(v, axis=1) / dt
    I = np.zeros(M + 1)
    for i in range(k):
        kin = sq(fn.r[i] * dvt[i] ** 2)
        I[:M] += eps * kin
        I[M] += eps * kin[-1]

    R = np.zeros(M + 1)
    Qint = np.zeros(M + 1)
    grads = [_grad_sq_integral(fn, v[i]) for i in range(k)]
    for i in range(k):
        R += fn.d[i] * grads[i]
        dd = _centered_dt(lambda tt: np.broadcast_to(spec.d[i](t=tt), np.shape(tt)), t)
        Qint += dd * grads[i]
    if not spec.f_is_zero:
        for i in range(k):
            R -= 2.0 * sq(primitive(spec, i, T, fn.X, v[i]))
            if spec.f[i].depends_on("t"):
                dF = _centered_dt(lambda tt: primitive(spec, i, tt, fn.X, v[i]), T)
                Qint -= 2.0 * sq(dF)
    if fn.coupled:
        p = v * v
        pair = np.einsum("ij...,i...,j...->...", fn.a, p, p)
        R += 0.5 * sq(fn.beta * pair)
        if spec.beta.depends_on("t"):
            db = _centered_dt(lambda tt: np.broadcast_to(spec.beta(t=tt, x=fn.X), np.broadcast_shapes(np.shape(tt), fn.X.shape)), T)
            Qint += 0.5 * sq(db * pair)
        da_pair = np.zeros_like(pair)
        for i in range(k):
            for j in range(k):
                if spec.a[i][j].depends_on("t"):
                    aij = spec.a[i][j]
                    da = _centered_dt(lambda tt: np.broadcast_to(aij(t=tt, x=fn.X), np.broadcast_shapes(np.shape(tt), fn.X.shape)), T)
                    da_pair += da * p[i] * p[j]
        Qint += 0.5 * sq(fn.beta * da_pair)

    a = dt / eps
    g = I + R
    E = _tail_accumulate(g, a)
    Q = _tail_accumulate(Qint, a)
    F = fn.value(v, check=False)
    res = np.empty(M + 1)
    res[:M] = (E[1:] - E[:-1]) / dt - (-I[:M] - R[:M] + E[:M]) / eps
    res[M] = (E[M] - E[M - 1]) / dt - (-I[M] - R[M] + E[M]) / eps
    return EnergyReport(times=t.copy(), F_eps=F, I=I, R=R, E=E, Q=Q, ode_residual=res,
                        eps=float(eps), constants=constants)
