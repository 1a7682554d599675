"""Hot loops, each in a Numba and a pure-numpy flavour.

Numba is used when it imports and ``GPWIDE_DISABLE_NUMBA`` is unset or "0".
``GPWIDE_THREADS`` caps the thread count of the parallel kernels.  Both
flavours are always importable (``*_numpy`` and ``*_numba``) so the benchmark
and the tests can compare them directly; the unsuffixed names are the
selected implementation.
"""
from __future__ import annotations

import os

import numpy as np

_DISABLED = os.environ.get("GPWIDE_DISABLE_NUMBA", "0").strip().lower() not in ("", "0", "false", "no")

try:
    if _DISABLED:
        raise ImportError("disabled by GPWIDE_DISABLE_NUMBA")
    import numba
    from numba import njit, prange
    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

if HAVE_NUMBA:
    # The TBB layer shipped with some distributions is too old; workqueue always works.
    numba.config.THREADING_LAYER = "workqueue"
    _threads = os.environ.get("GPWIDE_THREADS")
    if _threads:
        try:
            numba.set_num_threads(max(1, min(int(_threads), numba.config.NUMBA_NUM_THREADS)))
        except ValueError:
            pass

BACKEND = "numba" if HAVE_NUMBA else "numpy"


# --------------------------------------------------------------- numpy side

def thomas_numpy(lower, diag, upper, rhs):
    """Solve a batch of tridiagonal systems along the last axis.

    ``lower[..., 0]`` and ``upper[..., -1]`` are ignored.  No pivoting: the
    callers only pass diagonally dominant matrices.
    """
    diag = np.array(diag, dtype=float)
    rhs = np.array(rhs, dtype=float)
    lower = np.broadcast_to(lower, diag.shape)
    upper = np.broadcast_to(upper, diag.shape)
    n = diag.shape[-1]
    cp = np.empty_like(diag)
    dp = np.empty_like(rhs)
    cp[..., 0] = upper[..., 0] / diag[..., 0]
    dp[..., 0] = rhs[..., 0] / diag[..., 0]
    for j in range(1, n):
        den = diag[..., j] - lower[..., j] * cp[..., j - 1]
        cp[..., j] = upper[..., j] / den
        dp[..., j] = (rhs[..., j] - lower[..., j] * dp[..., j - 1]) / den
    out = np.empty_like(rhs)
    out[..., -1] = dp[..., -1]
    for j in range(n - 2, -1, -1):
        out[..., j] = dp[..., j] - cp[..., j] * out[..., j + 1]
    return out


def quad_terms_1d_numpy(v, rq, kin_w, grad_w):
    """Energy and gradient of the two quadratic difference terms of one species.

    energy = sum_n kin_w[n] sum_j rq[j] (v[n+1,j] - v[n,j])^2
           + sum_n grad_w[n] sum_j (v[n,j+1] - v[n,j])^2,   n < M.
    """
    dv_t = np.diff(v, axis=0)
    dv_x = np.diff(v[:-1], axis=1)
    kin = kin_w[:, None] * rq[None, :] * dv_t
    grd = grad_w[:, None] * dv_x
    energy = float(np.sum(kin * dv_t) + np.sum(grd * dv_x))
    g = np.zeros_like(v)
    g[:-1] -= 2.0 * kin
    g[1:] += 2.0 * kin
    g[:-1, :-1] -= 2.0 * grd
    g[:-1, 1:] += 2.0 * grd
    return energy, g


def holder_max_numpy(times, states, weights):
    """max over pairs a < b of sqrt(sum w (s_b - s_a)^2) / sqrt(t_b - t_a)."""
    best = 0.0
    for a in range(len(times) - 1):
        diff = states[a + 1:] - states[a]
        num = np.sqrt(np.maximum(diff * diff @ weights, 0.0))
        q = num / np.sqrt(times[a + 1:] - times[a])
        best = max(best, float(q.max()))
    return best


# --------------------------------------------------------------- numba side

if HAVE_NUMBA:

    @njit(cache=True)
    def _thomas_rows(lower, diag, upper, rhs, out):
        nb, n = diag.shape
        cp = np.empty(n)
        dp = np.empty(n)
        for b in range(nb):
            cp[0] = upper[b, 0] / diag[b, 0]
            dp[0] = rhs[b, 0] / diag[b, 0]
            for j in range(1, n):
                den = diag[b, j] - lower[b, j] * cp[j - 1]
                cp[j] = upper[b, j] / den
                dp[j] = (rhs[b, j] - lower[b, j] * dp[j - 1]) / den
            out[b, n - 1] = dp[n - 1]
            for j in range(n - 2, -1, -1):
                out[b, j] = dp[j] - cp[j] * out[b, j + 1]

    def thomas_numba(lower, diag, upper, rhs):
        rhs = np.asarray(rhs, dtype=float)
        shape = rhs.shape
        n = shape[-1]
        lo = np.ascontiguousarray(np.broadcast_to(lower, shape), dtype=float).reshape(-1, n)
        di = np.ascontiguousarray(np.broadcast_to(diag, shape), dtype=float).reshape(-1, n)
        up = np.ascontiguousarray(np.broadcast_to(upper, shape), dtype=float).reshape(-1, n)
        r = np.ascontiguousarray(rhs).reshape(-1, n)
        out = np.empty_like(r)
        _thomas_rows(lo, di, up, r, out)
        return out.reshape(shape)

    @njit(cache=True)
    def _quad_terms_1d(v, rq, kin_w, grad_w, g):
        m1, n1 = v.shape
        energy = 0.0
        for n in range(m1 - 1):
            kw = kin_w[n]
            gw = grad_w[n]
            for j in range(n1):
                d = v[n + 1, j] - v[n, j]
                c = kw * rq[j] * d
                energy += c * d
                g[n, j] -= 2.0 * c
                g[n + 1, j] += 2.0 * c
            for j in range(n1 - 1):
                d = v[n, j + 1] - v[n, j]
                c = gw * d
                energy += c * d
                g[n, j] -= 2.0 * c
                g[n, j + 1] += 2.0 * c
        return energy

    def quad_terms_1d_numba(v, rq, kin_w, grad_w):
        v = np.ascontiguousarray(v, dtype=float)
        g = np.zeros_like(v)
        e = _quad_terms_1d(v, np.ascontiguousarray(rq, dtype=float),
                           np.ascontiguousarray(kin_w, dtype=float),
                           np.ascontiguousarray(grad_w, dtype=float), g)
        return float(e), g

    @njit(cache=True, parallel=True)
    def _holder_max(times, states, weights):
        nt, p = states.shape
        row_best = np.zeros(nt)
        for a in prange(nt - 1):
            best = 0.0
            for b in range(a + 1, nt):
                acc = 0.0
                for j in range(p):
                    d = states[b, j] - states[a, j]
                    acc += weights[j] * d * d
                q = np.sqrt(acc) / np.sqrt(times[b] - times[a])
                if q > best:
                    best = q
            row_best[a] = best
        return row_best.max()

    def holder_max_numba(times, states, weights):
        return float(_holder_max(np.ascontiguousarray(times, dtype=float),
                                 np.ascontiguousarray(states, dtype=float),
                                 np.ascontiguousarray(weights, dtype=float)))

    thomas = thomas_numba
    quad_terms_1d = quad_terms_1d_numba
    holder_max = holder_max_numba
else:
    thomas_numba = quad_terms_1d_numba = holder_max_numba = None
    thomas = thomas_numpy
    quad_terms_1d = quad_terms_1d_numpy
    holder_max = holder_max_numpy
