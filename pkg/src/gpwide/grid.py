"""Uniform space-time lattice, difference quotients and the exponentially weighted quadrature.

A space-time field is a plain ``float64`` array of shape
``(k, M + 1, *spatial_shape)``: species, time node, space node(s).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np


@dataclass(frozen=True)
class Grid:
    bounds: tuple  # ((x_lo, x_hi),) or ((x_lo, x_hi), (y_lo, y_hi))
    N: tuple  # cells per axis
    T_max: float
    M: int  # time intervals

    def __post_init__(self):
        if len(self.bounds) != len(self.N) or len(self.N) not in (1, 2):
            raise ValueError("bounds and N must describe a 1D or 2D grid")
        if any(n < 2 for n in self.N) or self.M < 2:
            raise ValueError("need N >= 2 per axis and M >= 2")
        if not self.T_max > 0:
            raise ValueError("T_max must be positive")

    @property
    def dim(self):
        return len(self.N)

    @property
    def h(self):
        return tuple((hi - lo) / n for (lo, hi), n in zip(self.bounds, self.N))

    @property
    def dt(self):
        return self.T_max / self.M

    @property
    def spatial_shape(self):
        return tuple(n + 1 for n in self.N)

    def field_shape(self, k):
        return (k, self.M + 1) + self.spatial_shape

    @cached_property
    def x_nodes(self):
        return tuple(np.linspace(lo, hi, n + 1) for (lo, hi), n in zip(self.bounds, self.N))

    @cached_property
    def t_nodes(self):
        return np.linspace(0.0, self.T_max, self.M + 1)

    @cached_property
    def mesh(self):
        return np.meshgrid(*self.x_nodes, indexing="ij")

    @cached_property
    def node_weights(self):
        """Tensor trapezoid weights on the spatial nodes."""
        w = None
        for hk, n in zip(self.h, self.N):
            q = np.full(n + 1, hk)
            q[0] = q[-1] = 0.5 * hk
            w = q if w is None else np.multiply.outer(w, q)
        return w

    @property
    def cell_volume(self):
        return float(np.prod(self.h))

    @property
    def volume(self):
        return float(np.prod([hi - lo for lo, hi in self.bounds]))

    @cached_property
    def boundary_mask(self):
        mask = np.zeros(self.spatial_shape, dtype=bool)
        for ax in range(self.dim):
            idx = [slice(None)] * self.dim
            idx[ax] = 0
            mask[tuple(idx)] = True
            idx[ax] = -1
            mask[tuple(idx)] = True
        return mask

    def interval_weights(self, eps):
        """Exact mass of e^{-t/eps}/eps on each [t_n, t_{n+1}]."""
        t = self.t_nodes[:-1]
        return np.exp(-t / eps) * (-math.expm1(-self.dt / eps))

    def with_time(self, T_max, M):
        return Grid(self.bounds, self.N, T_max, M)


def make_grid(x_lo, x_hi, N, T_max, M, y=None, Ny=None):
    """Convenience constructor; pass ``y=(y_lo, y_hi)`` and ``Ny`` for 2D."""
    if y is None:
        return Grid(((float(x_lo), float(x_hi)),), (int(N),), float(T_max), int(M))
    return Grid(((float(x_lo), float(x_hi)), (float(y[0]), float(y[1]))),
                (int(N), int(Ny if Ny is not None else N)), float(T_max), int(M))


def truncation_horizon(eps, c, tol):
    """Horizon T whose weighted tail int_T^inf e^{-t/eps}/eps e^{ct} dt equals tol.

    Requires 1 - eps*c >= 1/2; the closed form is
    T = eps * ln(1 / ((1 - eps c) tol)) / (1 - eps c).
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    if not c >= 0:
        raise ValueError("growth rate c must be >= 0")
    if not 0 < tol <= 1:
        raise ValueError("tol must lie in (0, 1]")
    gap = 1.0 - eps * c
    if gap < 0.5:
        raise ValueError(f"1 - eps*c = {gap} < 1/2; eps is not admissible for this growth rate")
    return max(0.0, eps * math.log(1.0 / (gap * tol)) / gap)


def check_field(v, grid, k=None):
    v = np.asarray(v, dtype=float)
    if v.ndim != 2 + grid.dim or v.shape[1:] != grid.field_shape(1)[1:]:
        raise ValueError(f"field shape {v.shape} does not match grid {grid.field_shape(v.shape[0])}")
    if k is not None and v.shape[0] != k:
        raise ValueError(f"field has {v.shape[0]} species, expected {k}")
    if not np.all(np.isfinite(v)):
        raise ValueError("field has non-finite entries")
    return v


def discrete_gradient_sq(v, grid, i, n):
    """Squared forward-difference gradient per spatial cell of slice (i, n).

    In 2D each cell averages the squared differences on its two edges per axis.
    """
    sl = np.asarray(v)[i, n]
    if grid.dim == 1:
        return (np.diff(sl) / grid.h[0]) ** 2
    gx = (np.diff(sl, axis=0) / grid.h[0]) ** 2
    gy = (np.diff(sl, axis=1) / grid.h[1]) ** 2
    return 0.5 * (gx[:, :-1] + gx[:, 1:]) + 0.5 * (gy[:-1, :] + gy[1:, :])


def discrete_time_derivative_sq(v, grid, i, j):
    """Squared forward difference in time per interval at spatial node ``j``."""
    j = (j,) if np.ndim(j) == 0 else tuple(j)
    series = np.asarray(v)[(i, slice(None)) + j]
    return (np.diff(series) / grid.dt) ** 2


def spatial_integral(values, grid):
    """Integrate node values (trapezoid) or cell values (cell volume sum) over Omega.

    Leading axes are kept.
    """
    values = np.asarray(values, dtype=float)
    d = grid.dim
    tail = values.shape[values.ndim - d:]
    axes = tuple(range(values.ndim - d, values.ndim))
    if tail == grid.spatial_shape:
        return np.tensordot(values, grid.node_weights, axes=(axes, tuple(range(d))))
    if tail == tuple(grid.N):
        return values.sum(axis=axes) * grid.cell_volume
    raise ValueError(f"spatial shape {tail} matches neither nodes {grid.spatial_shape} nor cells {grid.N}")


def weighted_spacetime_quadrature(values, grid, eps):
    """Integral of values against e^{-t/eps}/eps over [0, T_max] x Omega.

    ``values`` has a leading time axis of length M (per interval) or M + 1
    (per node; the last node is unused).  Interval n contributes its left-end
    spatial integral times the exact weight mass on [t_n, t_{n+1}].
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    values = np.asarray(values, dtype=float)
    if values.shape[0] not in (grid.M, grid.M + 1):
        raise ValueError(f"time axis has length {values.shape[0]}, expected {grid.M} or {grid.M + 1}")
    per_time = spatial_integral(values[: grid.M], grid)
    return float(np.dot(grid.interval_weights(eps), per_time))
