"""System definition, structural hypothesis checks and coefficient transforms."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .expr import BinOp, Call, CoefficientExpr, Neg, Num, Var, parse_coefficient_expr

BOUNDARY_MODES = ("dirichlet_trace", "free")

# Gauss-Legendre rule on [0, 1]; exact for polynomials of degree <= 23 in s.
_GL_X, _GL_W = np.polynomial.legendre.leggauss(12)
GL_NODES = 0.5 * (_GL_X + 1.0)
GL_WEIGHTS = 0.5 * _GL_W

FD_STEP = 1e-5


@dataclass(frozen=True)
class GrowthConstants:
    A1: float = 0.0
    A2: float = 0.0
    H1: float = 0.0
    H2: float = 0.0
    C1: float = 0.0
    C2: float = 0.0
    D1: float = 1.0
    D2: float = 0.0
    D3: float = 0.0
    R1: float = 1.0
    R2: float = 1.0
    # None means "envelope is the constant 1", i.e. the norm is |Omega|.
    norm_U1U3: Optional[float] = None
    norm_U2: Optional[float] = None

    def problems(self):
        """Return a list of messages for constants violating their sign conditions."""
        out = []
        for name in ("A1", "A2", "H1", "H2", "C1", "C2", "D2", "D3"):
            if not getattr(self, name) >= 0:
                out.append(f"{name} must be >= 0")
        if not self.D1 > 0:
            out.append("D1 must be > 0")
        if not 0 < self.R1 <= self.R2:
            out.append("need 0 < R1 <= R2")
        for name in ("norm_U1U3", "norm_U2"):
            val = getattr(self, name)
            if val is not None and not val >= 0:
                out.append(f"{name} must be >= 0")
        return out


def epsilon_bar(growth: GrowthConstants) -> float:
    """Admissibility threshold 1 / (2 (A2 + H2 + C2 + D2 + 1))."""
    return 1.0 / (2.0 * (growth.A2 + growth.H2 + growth.C2 + growth.D2 + 1.0))


def growth_rate(growth: GrowthConstants) -> float:
    """Largest exponential rate of any weighted integrand of the functional."""
    return max(growth.D2, growth.H2, growth.A2 + growth.C2)


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """A k-species competition system on an interval or a rectangle.

    In 2D the expression variable ``x`` is the first coordinate; profiles that
    vary along the second axis must be given as sampled arrays in ``v0``.
    """

    k: int
    domain: tuple
    a: tuple
    beta: CoefficientExpr
    d: tuple
    r: tuple
    f: tuple
    rho: CoefficientExpr
    growth: GrowthConstants
    v0: tuple
    boundary_mode: str = "dirichlet_trace"
    b_lower: Optional[CoefficientExpr] = None
    mu_bar: Optional[float] = None
    U1: Optional[CoefficientExpr] = None
    U2: Optional[CoefficientExpr] = None
    U3: Optional[CoefficientExpr] = None
    mu: Optional[float] = None
    D4: Optional[float] = None

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.boundary_mode not in BOUNDARY_MODES:
            raise ValueError(f"boundary_mode must be one of {BOUNDARY_MODES}")
        if len(self.domain) not in (1, 2):
            raise ValueError("only 1D and 2D rectangular domains are supported")
        for lo, hi in self.domain:
            if not hi > lo:
                raise ValueError("domain bounds must satisfy lo < hi")
        k = self.k
        if len(self.a) != k or any(len(row) != k for row in self.a):
            raise ValueError("a must be a k x k matrix of expressions")
        for name in ("d", "r", "f", "v0"):
            if len(getattr(self, name)) != k:
                raise ValueError(f"{name} must have k = {k} entries")

    @property
    def dim(self):
        return len(self.domain)

    @property
    def volume(self):
        return float(np.prod([hi - lo for lo, hi in self.domain]))

    @property
    def f_is_zero(self):
        return all(fi.is_zero for fi in self.f)

    @property
    def a_is_zero(self):
        return all(aij.is_zero for row in self.a for aij in row) or self.beta.is_zero

    def _envelope_norm(self, expr):
        if expr is None:
            return self.volume
        lo, hi = self.domain[0]
        xs = np.linspace(lo, hi, 4001)
        vals = np.broadcast_to(expr(x=xs), xs.shape)
        other = float(np.prod([b - a for a, b in self.domain[1:]])) if self.dim > 1 else 1.0
        return float(np.trapezoid(vals, xs)) * other

    def norm_U2(self):
        if self.growth.norm_U2 is not None:
            return self.growth.norm_U2
        return self._envelope_norm(self.U2)

    def norm_U1U3(self):
        if self.growth.norm_U1U3 is not None:
            return self.growth.norm_U1U3
        if self.U1 is None and self.U3 is None:
            return self.volume
        lo, hi = self.domain[0]
        xs = np.linspace(lo, hi, 4001)
        u1 = self.U1(x=xs) if self.U1 is not None else np.ones_like(xs)
        u3 = self.U3(x=xs) if self.U3 is not None else np.ones_like(xs)
        other = float(np.prod([b - a for a, b in self.domain[1:]])) if self.dim > 1 else 1.0
        return float(np.trapezoid(np.broadcast_to(u1 * u3, xs.shape), xs)) * other

    def envelope(self, which, x):
        expr = {"U1": self.U1, "U2": self.U2, "U3": self.U3}[which]
        if expr is None:
            return np.ones_like(np.asarray(x, dtype=float))
        return np.broadcast_to(expr(x=x), np.shape(x))

    def initial_profile(self, i, nodes):
        """Initial datum of species ``i`` at the grid ``nodes`` (one array per axis)."""
        src = self.v0[i]
        mesh = np.meshgrid(*nodes, indexing="ij")
        if isinstance(src, CoefficientExpr):
            return np.array(np.broadcast_to(src(x=mesh[0]), mesh[0].shape), dtype=float)
        arr = np.asarray(src, dtype=float)
        if arr.shape == mesh[0].shape:
            return arr.copy()
        if arr.ndim == 1 and self.dim == 1:
            xs = np.linspace(*self.domain[0], arr.size)
            return np.interp(nodes[0], xs, arr)
        raise ValueError(f"sampled v0[{i}] has shape {arr.shape}, grid needs {mesh[0].shape}")


def build_problem(k, domain, *, a, beta, d, r, f, v0, rho=None, growth=None,
                  boundary_mode="dirichlet_trace", b_lower=None, mu_bar=None,
                  U1=None, U2=None, U3=None, mu=None, D4=None):
    """Build a :class:`ProblemSpec` from expression strings.

    ``a`` is a k x k nested sequence; ``d``, ``r``, ``f``, ``v0`` are either one
    value used for every species or a length-k sequence.  ``v0`` entries may be
    strings or sampled arrays.
    """
    def per_species(val, allowed):
        if not isinstance(val, (list, tuple)):
            val = [val] * k
        out = []
        for v in val:
            if isinstance(v, CoefficientExpr):
                out.append(v)
            elif isinstance(v, str):
                out.append(parse_coefficient_expr(v, allowed))
            elif np.ndim(v) == 0:
                out.append(parse_coefficient_expr(repr(float(v)), allowed))
            else:
                out.append(np.asarray(v, dtype=float))
        return tuple(out)

    def one(val, allowed):
        if val is None or isinstance(val, CoefficientExpr):
            return val
        return parse_coefficient_expr(str(val), allowed)

    if isinstance(domain[0], (int, float)):
        domain = (tuple(domain),)
    domain = tuple((float(lo), float(hi)) for lo, hi in domain)
    a_rows = tuple(per_species(row, {"t", "x"}) for row in a)
    return ProblemSpec(
        k=k,
        domain=domain,
        a=a_rows,
        beta=one(beta, {"t", "x"}),
        d=per_species(d, {"t"}),
        r=per_species(r, {"x"}),
        f=per_species(f, {"t", "x", "s"}),
        rho=one(rho if rho is not None else "0.5", {"t"}),
        growth=growth or GrowthConstants(),
        v0=per_species(v0, {"x"}),
        boundary_mode=boundary_mode,
        b_lower=one(b_lower, {"t"}),
        mu_bar=mu_bar,
        U1=one(U1, {"x"}),
        U2=one(U2, {"x"}),
        U3=one(U3, {"x"}),
        mu=mu,
        D4=D4,
    )


# ------------------------------------------------------------ reaction terms

def reaction(spec: ProblemSpec, i, t, x, s):
    """Reaction f_i extended outside [0, 1] by clamping s."""
    s = np.asarray(s, dtype=float)
    if spec.f[i].is_zero:
        return np.zeros(np.broadcast_shapes(np.shape(t), np.shape(x), s.shape))
    return spec.f[i](t=t, x=x, s=np.clip(s, 0.0, 1.0))


def primitive(spec: ProblemSpec, i, t, x, s):
    """F_i(t, x, s) = int_0^s f_i dl for the clamped reaction.

    Gauss-Legendre on [0, clip(s)] plus the linear continuation outside [0, 1];
    derivatives in s agree with :func:`reaction` to rounding for smooth f.
    """
    s = np.asarray(s, dtype=float)
    shape = np.broadcast_shapes(np.shape(t), np.shape(x), s.shape)
    if spec.f[i].is_zero:
        return np.zeros(shape)
    c = np.clip(s, 0.0, 1.0)
    acc = np.zeros(shape)
    for u, w in zip(GL_NODES, GL_WEIGHTS):
        acc = acc + w * reaction(spec, i, t, x, c * u)
    return c * acc + (s - c) * reaction(spec, i, t, x, c)


def primitive_increment(spec: ProblemSpec, i, t, x, s1, s2):
    """F_i(t, x, s2) - F_i(t, x, s1) without cancellation between the two values."""
    s1 = np.asarray(s1, dtype=float)
    s2 = np.asarray(s2, dtype=float)
    shape = np.broadcast_shapes(np.shape(t), np.shape(x), s1.shape, s2.shape)
    if spec.f[i].is_zero:
        return np.zeros(shape)
    c1 = np.clip(s1, 0.0, 1.0)
    c2 = np.clip(s2, 0.0, 1.0)
    acc = np.zeros(shape)
    for u, w in zip(GL_NODES, GL_WEIGHTS):
        acc = acc + w * reaction(spec, i, t, x, c1 + (c2 - c1) * u)
    out = (c2 - c1) * acc
    out = out + (s2 - c2) * reaction(spec, i, t, x, c2) - (s1 - c1) * reaction(spec, i, t, x, c1)
    return out


def antiderivative_F(spec: ProblemSpec, i, t, x, s, n_quad=64):
    """Composite-trapezoid approximation of int_0^s f_i(t, x, l) dl with n_quad panels."""
    if n_quad < 2:
        raise ValueError("n_quad must be >= 2")
    ls = np.linspace(0.0, float(s), n_quad + 1)
    vals = np.broadcast_to(reaction(spec, i, t, x, ls), ls.shape)
    return float(np.trapezoid(vals, ls))


def regularize_diffusion(d_i: CoefficientExpr, D2: float, m: int) -> CoefficientExpr:
    """d_m(t) = e^{-D2 t} / (e^{-D2 t} + 1/m) * d(t) + 1/m.

    Bounded between 1/m and (D1 + 1) e^{D2 t}; its log-derivative bound
    becomes D2 + D3.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    decay = Call("exp", (Neg(BinOp("*", Num(float(D2)), Var("t"))),))
    inv_m = Num(1.0 / m)
    frac = BinOp("/", decay, BinOp("+", decay, inv_m))
    root = BinOp("+", BinOp("*", frac, d_i.root), inv_m)
    return CoefficientExpr(root, frozenset({"t"}))


# -------------------------------------------------------------- validation

@dataclass(frozen=True)
class Violation:
    hypothesis: str
    point: dict
    observed: float
    bound: float


@dataclass
class ValidationReport:
    passed: bool
    epsilon_bar: float
    violations: list = field(default_factory=list)

    def summary(self, limit=20):
        lines = [f"passed = {self.passed}", f"epsilon_bar = {self.epsilon_bar!r}",
                 f"violations = {len(self.violations)}"]
        for v in self.violations[:limit]:
            lines.append(f"  [{v.hypothesis}] at {v.point}: observed {v.observed!r}, bound {v.bound!r}")
        if len(self.violations) > limit:
            lines.append(f"  ... {len(self.violations) - limit} more")
        return "\n".join(lines)


def _centered_dt(fn, t):
    # second order everywhere: one-sided three-point stencil near t = 0
    h = FD_STEP * np.maximum(1.0, t)
    central = (fn(t + h) - fn(np.maximum(t - h, 0.0))) / (2 * h)
    forward = (-3 * fn(t) + 4 * fn(t + h) - fn(t + 2 * h)) / (2 * h)
    return np.where(t - h < 0, forward, central)


def validate_problem(spec: ProblemSpec, sample_density: int, t_max: float = 10.0) -> ValidationReport:
    """Check the structural hypotheses on a lattice of sample points.

    Sound but incomplete: a passing report means no violation was found at
    the ``sample_density`` samples per axis of [0, t_max] x Omega x [0, 1].
    Envelope bounds get a relative slack of 1e-12 for rounding; bounds on
    finite-difference time derivatives get 1e-6.
    """
    if sample_density < 2:
        raise ValueError("sample_density must be >= 2")
    g = spec.growth
    report = ValidationReport(passed=True, epsilon_bar=epsilon_bar(g))
    viol = report.violations

    for msg in g.problems():
        viol.append(Violation(f"growth_constants: {msg}", {}, float("nan"), float("nan")))

    n = sample_density
    ts = np.linspace(0.0, t_max, n)
    lo, hi = spec.domain[0]
    xs = np.linspace(lo, hi, n)
    T, X = np.meshgrid(ts, xs, indexing="ij")
    rt_env, rt_fd = 1e-12, 1e-6

    def record(hyp, mask, observed, bound, coords):
        idx = np.argwhere(mask)
        for ind in idx:
            ind = tuple(ind)
            point = {name: float(arr[ind]) for name, arr in coords.items()}
            viol.append(Violation(hyp, point, float(np.asarray(observed)[ind]), float(np.asarray(bound)[ind])))

    def sampled(expr, **kw):
        shape = np.broadcast_shapes(*(np.shape(v) for v in kw.values()))
        return np.broadcast_to(expr(**kw), shape)

    coords_tx = {"t": T, "x": X}
    U1, U2, U3 = (spec.envelope(w, X) for w in ("U1", "U2", "U3"))

    # interaction matrix
    for i in range(spec.k):
        for j in range(spec.k):
            aij = sampled(spec.a[i][j], t=T, x=X)
            if i == j:
                record("interaction_zero_diagonal", aij != 0, aij, np.zeros_like(aij), coords_tx)
                continue
            aji = sampled(spec.a[j][i], t=T, x=X)
            if i < j:
                record(f"interaction_symmetry a{i+1}{j+1}=a{j+1}{i+1}", aij != aji, aij, aji, coords_tx)
            record(f"interaction_nonnegative a{i+1}{j+1}", aij < 0, aij, np.zeros_like(aij), coords_tx)
            env = g.A1 * np.exp(g.A2 * T) * U1
            record(f"interaction_growth a{i+1}{j+1}", aij > env * (1 + rt_env), aij, env, coords_tx)
            if spec.a[i][j].depends_on("t"):
                da = np.abs(_centered_dt(lambda tt: sampled(spec.a[i][j], t=tt, x=X), T))
                record(f"interaction_rate a{i+1}{j+1}", da > env * (1 + rt_fd), da, env, coords_tx)
            if spec.mu_bar is not None:
                record(f"interaction_floor a{i+1}{j+1}", aij < spec.mu_bar, aij,
                       np.full_like(aij, spec.mu_bar), coords_tx)

    # reaction
    ss = np.linspace(0.0, 1.0, n)
    T3, X3, S3 = np.meshgrid(ts, xs, ss, indexing="ij")
    coords_txs = {"t": T3, "x": X3, "s": S3}
    env_f = g.H1 * np.exp(g.H2 * T3) * spec.envelope("U2", X3)
    for i in range(spec.k):
        f0 = reaction(spec, i, T, X, np.zeros_like(T))
        f1 = reaction(spec, i, T, X, np.ones_like(T))
        record(f"reaction_sign_at_0 f{i+1}", f0 < 0, f0, np.zeros_like(f0), coords_tx)
        record(f"reaction_sign_at_1 f{i+1}", f1 > 0, f1, np.zeros_like(f1), coords_tx)
        fv = np.abs(reaction(spec, i, T3, X3, S3))
        record(f"reaction_growth f{i+1}", fv > env_f * (1 + rt_env), fv, env_f, coords_txs)
        if spec.f[i].depends_on("t"):
            df = np.abs(_centered_dt(lambda tt: reaction(spec, i, tt, X3, S3), T3))
            record(f"reaction_rate f{i+1}", df > env_f * (1 + rt_fd), df, env_f, coords_txs)

    # competition strength
    beta = sampled(spec.beta, t=T, x=X)
    env_b = g.C1 * np.exp(g.C2 * T) * U3
    record("beta_nonnegative", beta < 0, beta, np.zeros_like(beta), coords_tx)
    record("beta_growth", beta > env_b * (1 + rt_env), beta, env_b, coords_tx)
    if spec.beta.depends_on("t"):
        db = np.abs(_centered_dt(lambda tt: sampled(spec.beta, t=tt, x=X), T))
        record("beta_rate", db > env_b * (1 + rt_fd), db, env_b, coords_tx)
    if spec.b_lower is not None:
        b = np.broadcast_to(spec.b_lower(t=T), T.shape)
        record("beta_lower_envelope", beta < b, beta, b, coords_tx)

    # diffusion
    coords_t = {"t": ts}
    rho = np.broadcast_to(spec.rho(t=ts), ts.shape)
    record("rho_positive", rho <= 0, rho, np.zeros_like(rho), coords_t)
    env_d = g.D1 * np.exp(g.D2 * ts)
    for i in range(spec.k):
        di = np.broadcast_to(spec.d[i](t=ts), ts.shape)
        record(f"diffusion_lower d{i+1}", di < rho, di, rho, coords_t)
        record(f"diffusion_upper d{i+1}", di > env_d * (1 + rt_env), di, env_d, coords_t)
        dd = np.abs(_centered_dt(lambda tt: np.broadcast_to(spec.d[i](t=tt), np.shape(tt)), ts))
        record(f"diffusion_rate d{i+1}", dd > g.D3 * di * (1 + rt_fd) + 1e-300, dd, g.D3 * di, coords_t)

    # inertia weights
    coords_x = {"x": xs}
    for i in range(spec.k):
        ri = np.broadcast_to(spec.r[i](x=xs), xs.shape)
        record(f"inertia_lower r{i+1}", ri < g.R1, ri, np.full_like(ri, g.R1), coords_x)
        record(f"inertia_upper r{i+1}", ri > g.R2, ri, np.full_like(ri, g.R2), coords_x)

    # initial data
    for i in range(spec.k):
        nodes = [np.linspace(a, b, n) for a, b in spec.domain]
        v0 = spec.initial_profile(i, nodes) if isinstance(spec.v0[i], CoefficientExpr) else \
            np.asarray(spec.v0[i], dtype=float)
        grid_pts = np.meshgrid(*nodes, indexing="ij") if isinstance(spec.v0[i], CoefficientExpr) else None
        coords = {"x": grid_pts[0]} if grid_pts is not None else {"index": np.indices(v0.shape)[0]}
        record(f"initial_lower v0_{i+1}", v0 < 0, v0, np.zeros_like(v0), coords)
        record(f"initial_upper v0_{i+1}", v0 > 1, v0, np.ones_like(v0), coords)

    report.passed = not viol
    return report


def check_epsilon(spec: ProblemSpec, eps: float):
    eb = epsilon_bar(spec.growth)
    if not 0 < eps < eb:
        raise ValueError(
            f"epsilon = {eps!r} is outside (0, epsilon_bar) with "
            f"epsilon_bar = 1/(2(A2+H2+C2+D2+1)) = {eb!r}")
    return eb
