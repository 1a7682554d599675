import numpy as np
import pytest

from gpwide import GrowthConstants, build_problem
from gpwide.functional import wide_functional

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


def canonical(**kw):
    args = dict(a=[["0", "1"], ["1", "0"]], beta="1", d="1", r="1", f="0", v0=["x", "1-x"],
                growth=GrowthConstants(A1=1, C1=1, D1=1))
    args.update(kw)
    return build_problem(2, (0, 1), **args)


def heat_problem(boundary="dirichlet_trace", v0="sin(3.141592653589793*x)"):
    return build_problem(1, (0, 1), a=[["0"]], beta="0", d="1", r="1", f="0", v0=[v0],
                         boundary_mode=boundary)


def rich_problem():
    """Every coefficient nontrivial and time dependent where allowed."""
    return build_problem(
        2, (0, 1),
        a=[["0", "1 + 0.5*t*x"], ["1 + 0.5*t*x", "0"]],
        beta="2 + sin(t)",
        d=["1 + 0.5*t", "2"],
        r=["1 + x", "1"],
        f=["s*(1-s)*(1+t)", "0.5 - s"],
        v0=["x", "1 - x"],
        growth=GrowthConstants(A1=5, C1=5, H1=5, D1=5, D3=1, R2=2),
    )


def random_admissible(fn, rng):
    v = fn.admissible_template()
    free = ~np.broadcast_to(fn.pinned, v.shape)
    v[free] = rng.random(int(free.sum()))
    return v


def quadratic_oracle(spec, grid, eps):
    """Minimizer of a quadratic functional from its values alone.

    The Hessian and linear part over the free nodes are rebuilt by
    polarization of F and the stationarity system is solved densely.
    """
    fn = wide_functional(spec, grid, eps)
    base = fn.admissible_template()
    base[np.broadcast_to(~fn.pinned, base.shape)] = 0.0
    free = np.flatnonzero(~np.broadcast_to(fn.pinned, base.shape))

    def phi(*idx):
        v = base.copy()
        for a in idx:
            v.flat[a] += 1.0
        return fn.value(v, check=False)

    f0 = phi()
    single = np.array([phi(a) for a in free])
    n = len(free)
    H = np.empty((n, n))
    for p in range(n):
        H[p, p] = phi(free[p], free[p]) - 2 * single[p] + f0
        for q in range(p + 1, n):
            H[p, q] = H[q, p] = phi(free[p], free[q]) - single[p] - single[q] + f0
    b = single - f0 - 0.5 * np.diag(H)
    u = np.linalg.solve(H, -b)
    out = base.copy()
    out.flat[free] = u
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def canonical_spec():
    return canonical()
