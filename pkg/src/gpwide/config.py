"""Flat ``key = value`` configuration with [problem], [coefficients] and [run] sections.

Example::

    [problem]
    k = 2
    domain = 0, 1
    boundary = dirichlet_trace
    A1 = 1
    C1 = 1

    [coefficients]
    a_1_2 = "1"          # a_2_1 mirrors a_1_2 unless given
    beta = "1"
    d = "1"              # or d_1, d_2, ...
    v0_1 = "x"
    v0_2 = "1 - x"

    [run]
    mode = both
    eps_list = 0.1, 0.05, 0.025
    T = 1
    dt = 1e-3
    N = 32
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass

from .errors import ConfigError, ExprError
from .problem import GrowthConstants, build_problem, epsilon_bar, validate_problem

GROWTH_KEYS = ("A1", "A2", "H1", "H2", "C1", "C2", "D1", "D2", "D3", "R1", "R2", "norm_U1U3", "norm_U2")
PROBLEM_KEYS = set(GROWTH_KEYS) | {"k", "domain", "boundary", "mu_bar", "mu", "D4"}
COEFF_SCALAR_KEYS = {"beta", "rho", "b_lower", "U1", "U2", "U3", "d", "r", "f"}
COEFF_INDEXED = re.compile(r"^(d|r|f|v0)_(\d+)$|^a_(\d+)_(\d+)$")
RUN_KEYS = {"mode", "eps_list", "epsilon", "T", "dt", "N", "tol", "horizon_tol", "max_iters", "out_dir",
            "delta", "tau", "windows", "theta", "dt_factor", "sample_density"}
SECTIONS = ("problem", "coefficients", "run")


@dataclass(frozen=True)
class RunOptions:
    mode: str = "both"
    eps_list: tuple = (0.1,)
    T: float = 1.0
    dt: float = 1e-3
    N: int = 32
    tol: float = 1e-8
    max_iters: int = 200
    out_dir: str = "out"
    delta: float = 0.1
    tau: float = 1.0
    windows: tuple = ()
    horizon_tol: float = 1e-10
    theta: float = 0.5
    dt_factor: float = 1.0 / 16.0
    sample_density: int = 11

    def problems(self, eps_bar=None):
        out = []
        if self.mode not in ("wide", "parabolic", "both"):
            out.append(f"mode must be wide, parabolic or both, not {self.mode!r}")
        if not self.eps_list:
            out.append("eps_list is empty")
        if any(b >= a for a, b in zip(self.eps_list, self.eps_list[1:])):
            out.append("eps_list must be strictly decreasing")
        if self.N < 1 or self.max_iters < 1:
            out.append("N and max_iters must be >= 1")
        for name in ("T", "dt", "tol", "delta", "tau", "horizon_tol"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                out.append(f"{name} must be positive")
        if not 0.5 <= self.theta <= 1:
            out.append("theta must lie in [0.5, 1]")
        if not 0 < self.dt_factor <= 0.25:
            out.append("dt_factor must lie in (0, 0.25]")
        if eps_bar is not None:
            for e in self.eps_list:
                if not 0 < e < eps_bar:
                    out.append(f"epsilon = {e!r} is outside (0, epsilon_bar) with "
                               f"epsilon_bar = 1/(2(A2+H2+C2+D2+1)) = {eps_bar!r}")
        return out


def _strip_value(raw):
    raw = raw.strip()
    if raw[:1] in "\"'":
        quote = raw[0]
        end = raw.find(quote, 1)
        if end < 0:
            raise ValueError("unterminated quoted string")
        tail = raw[end + 1:].strip()
        if tail and not tail.startswith(("#", ";")):
            raise ValueError(f"unexpected text after quoted value: {tail!r}")
        return raw[1:end]
    for mark in (" #", "\t#", " ;", "\t;"):
        pos = raw.find(mark)
        if pos >= 0:
            raw = raw[:pos]
    return raw.strip()


def parse_config_text(text, source="<config>"):
    """Parse into {section: {key: (value, line)}}; raises ConfigError with line numbers."""
    data = {s: {} for s in SECTIONS}
    section = None
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith(("#", ";")):
            continue
        where = f"{source}:{lineno}"
        if stripped.startswith("["):
            if not stripped.endswith("]"):
                raise ConfigError(f"{where}: malformed section header {stripped!r}")
            section = stripped[1:-1].strip()
            if section not in SECTIONS:
                raise ConfigError(f"{where}: unknown section [{section}]")
            continue
        if "=" not in stripped:
            raise ConfigError(f"{where}: expected 'key = value', got {stripped!r}")
        if section is None:
            raise ConfigError(f"{where}: key outside any section")
        key, raw = stripped.split("=", 1)
        key = key.strip()
        try:
            value = _strip_value(raw)
        except ValueError as exc:
            raise ConfigError(f"{where}: {exc}") from None
        _check_key(section, key, where)
        if key in data[section]:
            raise ConfigError(f"{where}: duplicate key {key!r} (first at line {data[section][key][1]})")
        data[section][key] = (value, lineno)
    return data


def _check_key(section, key, where):
    ok = {"problem": lambda k: k in PROBLEM_KEYS,
          "coefficients": lambda k: k in COEFF_SCALAR_KEYS or COEFF_INDEXED.match(k) is not None,
          "run": lambda k: k in RUN_KEYS}[section](key)
    if not ok:
        raise ConfigError(f"{where}: unknown key {key!r} in [{section}]")


def _section_of(key):
    if key in PROBLEM_KEYS:
        return "problem"
    if key in RUN_KEYS:
        return "run"
    if key in COEFF_SCALAR_KEYS or COEFF_INDEXED.match(key):
        return "coefficients"
    return None


def apply_overrides(data, overrides, source="--override"):
    """Apply ``key=value`` or ``section.key=value`` strings on top of parsed data."""
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"{source}: expected key=value, got {item!r}")
        key, raw = item.split("=", 1)
        key = key.strip()
        if "." in key:
            section, key = key.split(".", 1)
        else:
            section = _section_of(key)
        if section not in SECTIONS:
            raise ConfigError(f"{source}: unknown key {key!r}")
        _check_key(section, key, source)
        try:
            data[section][key] = (_strip_value(raw), 0)
        except ValueError as exc:
            raise ConfigError(f"{source}: {exc}") from None
    return data


def _num(data, section, key, conv=float, default=None, required=False, source=""):
    if key not in data[section]:
        if required:
            raise ConfigError(f"{source}: missing required key {key!r} in [{section}]")
        return default
    value, line = data[section][key]
    try:
        out = conv(value)
    except ValueError:
        raise ConfigError(f"{source}:{line}: key {key!r}: cannot read {value!r} as {conv.__name__}") from None
    if isinstance(out, float) and not math.isfinite(out):
        raise ConfigError(f"{source}:{line}: key {key!r} must be finite")
    return out


def _float_list(text):
    return tuple(float(p) for p in text.replace(";", ",").split(",") if p.strip())


def build_from_data(data, source="<config>"):
    """Turn parsed sections into (ProblemSpec, RunOptions, ValidationReport)."""
    P, C = "problem", "coefficients"
    k = _num(data, P, "k", int, required=True, source=source)
    if k < 1:
        raise ConfigError(f"{source}: k must be >= 1")
    if "domain" in data[P]:
        val, line = data[P]["domain"]
        try:
            dom = _float_list(val)
        except ValueError:
            raise ConfigError(f"{source}:{line}: domain must be 'lo, hi' or 'xlo, xhi, ylo, yhi'") from None
        if len(dom) not in (2, 4):
            raise ConfigError(f"{source}:{line}: domain must have 2 or 4 numbers")
        domain = tuple((dom[i], dom[i + 1]) for i in range(0, len(dom), 2))
    else:
        domain = ((0.0, 1.0),)
    growth_kw = {}
    for key in GROWTH_KEYS:
        v = _num(data, P, key, float, source=source)
        if v is not None:
            growth_kw[key] = v
    growth = GrowthConstants(**growth_kw)
    if growth.problems():
        raise ConfigError(f"{source}: invalid growth constants: " + "; ".join(growth.problems()))

    coeff = {key: val for key, (val, _) in data[C].items()}
    lines = {key: line for key, (_, line) in data[C].items()}

    def species_list(name, default):
        out = []
        for i in range(1, k + 1):
            key = f"{name}_{i}"
            if key in coeff:
                out.append(coeff[key])
            elif name in coeff:
                out.append(coeff[name])
            elif default is not None:
                out.append(default)
            else:
                raise ConfigError(f"{source}: missing required key {key!r} in [coefficients]")
        return out

    for key in coeff:
        m = COEFF_INDEXED.match(key)
        if m:
            idx = [int(g) for g in m.groups() if g is not None and g.isdigit()]
            if any(not 1 <= j <= k for j in idx):
                raise ConfigError(f"{source}:{lines[key]}: index out of range in {key!r} (k = {k})")
    a = [["0"] * k for _ in range(k)]
    for i in range(k):
        for j in range(k):
            key, mirror = f"a_{i + 1}_{j + 1}", f"a_{j + 1}_{i + 1}"
            if key in coeff:
                a[i][j] = coeff[key]
            elif mirror in coeff:
                a[i][j] = coeff[mirror]
    try:
        spec = build_problem(
            k, domain, a=a, beta=coeff.get("beta", "0"),
            d=species_list("d", "1"), r=species_list("r", "1"), f=species_list("f", "0"),
            v0=species_list("v0", None), rho=coeff.get("rho"), growth=growth,
            boundary_mode=data[P].get("boundary", ("dirichlet_trace", 0))[0],
            b_lower=coeff.get("b_lower"), mu_bar=_num(data, P, "mu_bar", float, source=source),
            U1=coeff.get("U1"), U2=coeff.get("U2"), U3=coeff.get("U3"),
            mu=_num(data, P, "mu", float, source=source), D4=_num(data, P, "D4", float, source=source))
    except ExprError as exc:
        raise ConfigError(f"{source}: coefficient expression: {exc}") from None
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from None

    R = "run"
    eps_list = None
    if "eps_list" in data[R]:
        val, line = data[R]["eps_list"]
        try:
            eps_list = _float_list(val)
        except ValueError:
            raise ConfigError(f"{source}:{line}: eps_list must be comma-separated numbers") from None
    if "epsilon" in data[R]:
        if eps_list is not None:
            raise ConfigError(f"{source}: give either epsilon or eps_list, not both")
        eps_list = (_num(data, R, "epsilon", float, source=source),)
    windows = ()
    if "windows" in data[R]:
        try:
            windows = _float_list(data[R]["windows"][0])
        except ValueError:
            raise ConfigError(f"{source}:{data[R]['windows'][1]}: windows must be numbers") from None
    defaults = RunOptions()
    opts = RunOptions(
        mode=data[R].get("mode", (defaults.mode, 0))[0],
        eps_list=eps_list if eps_list is not None else defaults.eps_list,
        T=_num(data, R, "T", float, defaults.T, source=source),
        dt=_num(data, R, "dt", float, defaults.dt, source=source),
        N=_num(data, R, "N", int, defaults.N, source=source),
        tol=_num(data, R, "tol", float, defaults.tol, source=source),
        max_iters=_num(data, R, "max_iters", int, defaults.max_iters, source=source),
        out_dir=data[R].get("out_dir", (defaults.out_dir, 0))[0],
        delta=_num(data, R, "delta", float, defaults.delta, source=source),
        tau=_num(data, R, "tau", float, defaults.tau, source=source),
        windows=windows,
        horizon_tol=_num(data, R, "horizon_tol", float, defaults.horizon_tol, source=source),
        theta=_num(data, R, "theta", float, defaults.theta, source=source),
        dt_factor=_num(data, R, "dt_factor", float, defaults.dt_factor, source=source),
        sample_density=_num(data, R, "sample_density", int, defaults.sample_density, source=source),
    )
    problems = opts.problems(epsilon_bar(spec.growth))
    if problems:
        raise ConfigError(f"{source}: " + "; ".join(problems))
    try:
        report = validate_problem(spec, max(2, opts.sample_density), t_max=max(opts.T, 1.0))
    except ExprError as exc:
        raise ConfigError(f"{source}: coefficient evaluation: {exc}") from None
    if not report.passed:
        raise ConfigError(f"{source}: problem validation failed\n{report.summary()}")
    return spec, opts, report


def load_config(path, overrides=None):
    """Read, parse, override, build and validate; returns (ProblemSpec, RunOptions)."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    data = parse_config_text(text, str(path))
    apply_overrides(data, overrides)
    spec, opts, _ = build_from_data(data, str(path))
    return spec, opts
