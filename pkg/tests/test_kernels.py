import importlib.util
import os
import subprocess
import sys

import numpy as np
import pytest
import scipy.linalg

from gpwide import _kernels

needs_numba = pytest.mark.skipif(not _kernels.HAVE_NUMBA, reason="numba backend not active")


def tridiag_batch(rng, batch=3, n=12):
    lower = rng.uniform(-1, 0, (batch, n))
    upper = rng.uniform(-1, 0, (batch, n))
    diag = 2.5 + rng.random((batch, n))
    rhs = rng.standard_normal((batch, n))
    return lower, diag, upper, rhs


def test_thomas_matches_banded_solver(rng):
    lower, diag, upper, rhs = tridiag_batch(rng)
    out = _kernels.thomas_numpy(lower, diag, upper, rhs)
    for b in range(3):
        ab = np.zeros((3, 12))
        ab[0, 1:] = upper[b, :-1]
        ab[1] = diag[b]
        ab[2, :-1] = lower[b, 1:]
        assert np.allclose(out[b], scipy.linalg.solve_banded((1, 1), ab, rhs[b]), rtol=1e-13, atol=1e-13)


def test_quad_terms_gradient_by_finite_differences(rng):
    M, N = 5, 6
    v = rng.random((M + 1, N + 1))
    rq = rng.random(N + 1)
    kin_w = rng.random(M)
    grad_w = rng.random(M)
    e, g = _kernels.quad_terms_1d_numpy(v, rq, kin_w, grad_w)
    # the energy is quadratic, so central differences are exact up to rounding
    for idx in [(0, 0), (2, 3), (M, N), (1, N)]:
        vp, vm = v.copy(), v.copy()
        vp[idx] += 1e-4
        vm[idx] -= 1e-4
        fd = (_kernels.quad_terms_1d_numpy(vp, rq, kin_w, grad_w)[0]
              - _kernels.quad_terms_1d_numpy(vm, rq, kin_w, grad_w)[0]) / 2e-4
        assert fd == pytest.approx(g[idx], rel=1e-8, abs=1e-10)


@needs_numba
def test_thomas_parity(rng):
    args = tridiag_batch(rng, batch=4, n=33)
    assert np.allclose(_kernels.thomas_numba(*args), _kernels.thomas_numpy(*args), rtol=1e-14, atol=1e-14)


@needs_numba
def test_quad_terms_parity(rng):
    v = rng.random((21, 17))
    rq, kin_w, grad_w = rng.random(17), rng.random(20), rng.random(20)
    e1, g1 = _kernels.quad_terms_1d_numba(v, rq, kin_w, grad_w)
    e0, g0 = _kernels.quad_terms_1d_numpy(v, rq, kin_w, grad_w)
    assert e1 == pytest.approx(e0, rel=1e-13)
    assert np.allclose(g1, g0, rtol=1e-13, atol=1e-14)


@needs_numba
def test_holder_parity(rng):
    times = np.cumsum(rng.uniform(0.01, 0.1, 50))
    states = rng.random((50, 34))
    weights = rng.random(34)
    assert _kernels.holder_max_numba(times, states, weights) == pytest.approx(
        _kernels.holder_max_numpy(times, states, weights), rel=1e-13)


def test_selected_backend_is_consistent():
    assert _kernels.BACKEND in ("numba", "numpy")
    if _kernels.BACKEND == "numpy":
        assert _kernels.thomas is _kernels.thomas_numpy


def test_disable_switch_in_subprocess():
    code = ("from gpwide import _kernels, solve_parabolic, make_grid, build_problem\n"
            "spec = build_problem(1, (0, 1), a=[['0']], beta='0', d='1', r='1', f='0',"
            " v0=['sin(3.141592653589793*x)'])\n"
            "tr = solve_parabolic(spec, 0.05, 1e-3, make_grid(0, 1, 32, 1.0, 2))\n"
            "print(_kernels.BACKEND, repr(float(tr.states[-1, 0, 16])))\n")
    outs = {}
    for flag in ("1", "0"):
        env = dict(os.environ, GPWIDE_DISABLE_NUMBA=flag)
        proc = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, env=env)
        assert proc.returncode == 0, proc.stderr
        outs[flag] = proc.stdout.split()
    assert outs["1"][0] == "numpy"
    assert outs["0"][0] == ("numba" if importlib.util.find_spec("numba") else "numpy")
    assert float(outs["1"][1]) == pytest.approx(float(outs["0"][1]), rel=1e-13)
