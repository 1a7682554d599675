"""Command line entry point: ``gpwide --config run.cfg [--mode ...] [--out-dir ...]``."""
from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace

import numpy as np

from .config import load_config
from .diagnostics import bound_constants, holder_quotient, lemma_sq_integral, segregation_trace
from .errors import ConfigError, NumericsError
from .functional import energy_traces
from .grid import make_grid
from .io import write_field_csv, write_report, write_trajectory_csv
from .minimizer import MinimizeOptions, continuation_in_eps, default_grid_builder
from .parabolic import Trajectory, compare_wide_vs_parabolic, solve_parabolic

log = logging.getLogger("gpwide")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICS, EXIT_IO = 0, 2, 3, 4

PLOT_SCRIPT = '''"""Plot the CSV outputs of a gpwide run (needs matplotlib)."""
import csv
import glob
import os

import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))
for path in sorted(glob.glob(os.path.join(here, "*.csv"))):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    times = sorted({float(r[0]) for r in body})
    picks = [times[int(i * (len(times) - 1) / 4)] for i in range(5)]
    fig, ax = plt.subplots()
    for t in picks:
        sel = [r for r in body if float(r[0]) == t]
        for c in range(2, len(header)):
            ax.plot([float(r[1]) for r in sel], [float(r[c]) for r in sel], label=f"{header[c]} t={t:.3g}")
    ax.set_xlabel("x")
    ax.set_title(os.path.basename(path))
    ax.legend(fontsize="small")
    fig.savefig(path[:-4] + ".png", dpi=120)
'''


def _as_trajectory(result, T=None):
    """View a minimizer field (1D) as a trajectory, optionally cut at time T."""
    grid = result.grid
    times = grid.t_nodes
    states = np.moveaxis(result.v, 1, 0)
    if T is not None:
        keep = times <= T * (1 + 1e-12)
        times, states = times[keep], states[keep]
    return Trajectory(times=times.copy(), states=states.copy(), x=grid.x_nodes[0].copy(), dt=grid.dt)


def _trajectory_diagnostics(traj, spec, opts, report, prefix=""):
    if len(traj.times) >= 3:
        sup, chat = holder_quotient(traj)
        report[prefix + "holder_sup"] = sup
        report[prefix + "holder_Chat"] = chat
    windows = [w for w in opts.windows if w + opts.tau <= traj.times[-1] * (1 + 1e-12)]
    seg = segregation_trace(traj, spec, opts.delta, windows, opts.tau)
    report[prefix + "S_final"] = float(seg.S[-1])
    report[prefix + "S_beta_final"] = float(seg.S_beta[-1])
    report[prefix + "max_box_violation"] = traj.max_box_violation
    for T0 in windows:
        for i in range(spec.k):
            val, bound = lemma_sq_integral(traj, spec, i, T0, opts.tau, opts.delta)
            report[f"{prefix}window[{T0:g}].interior_integral[{i + 1}]"] = val
            report[f"{prefix}window[{T0:g}].interior_bound[{i + 1}]"] = bound
    for w in seg.windows:
        T0 = w["T"]
        report[f"{prefix}window[{T0:g}].mean_S"] = w["mean_S"]
        report[f"{prefix}window[{T0:g}].beta_product"] = w["beta_product"]
        report[f"{prefix}window[{T0:g}].C_delta_1"] = w["C_delta_1"]
        report[f"{prefix}window[{T0:g}].C_delta_1_over_inf_b"] = w["bound_over_inf_b"]


def run(spec, opts, out_dir=None):
    """Execute a configured run and write its outputs; returns an exit status.

    All numerics finish before anything is written, so a failed run leaves
    no partial output behind.
    """
    out_dir = out_dir or opts.out_dir
    grid = make_grid(*spec.domain[0], opts.N, 1.0, 2) if spec.dim == 1 else None
    bc = bound_constants(spec, grid if grid is not None else make_grid(*spec.domain[0], opts.N, 1.0, 2,
                                                                          y=spec.domain[1]))
    report = {
        "mode": opts.mode, "k": spec.k, "N": opts.N, "T": opts.T,
        "M1": bc.M1, "M2": bc.M2, "M3": bc.M3, "M_tilde1": bc.M_tilde1, "M_tilde2": bc.M_tilde2,
        "grad_v0_sq": bc.grad_v0_sq, "boundary_mode": spec.boundary_mode,
    }
    if spec.boundary_mode == "free":
        report["note.boundary"] = "free mode: parabolic reference uses homogeneous Neumann rows"
    cbar = bc.C_bar(opts.T)
    if cbar is not None:
        report["C_bar"] = cbar
    files = {}

    traj = None
    if opts.mode in ("parabolic", "both"):
        if spec.dim != 1:
            raise ConfigError("the parabolic reference is 1D only")
        traj = solve_parabolic(spec, opts.T, opts.dt, grid, theta=opts.theta)
        files["trajectory.csv"] = ("traj", traj)
        report["dt"] = traj.dt
        report["theta"] = opts.theta
        _trajectory_diagnostics(traj, spec, opts, report)

    if opts.mode in ("wide", "both"):
        T_min = opts.T if opts.mode == "both" else 0.0
        builder = default_grid_builder(spec, opts.N, opts.horizon_tol, opts.dt_factor, T_min=T_min)
        mopts = MinimizeOptions(max_iters=opts.max_iters, grad_tol=opts.tol)
        results = continuation_in_eps(spec, builder, opts.eps_list, mopts)
        for j, res in enumerate(results):
            key = f"eps[{j}]"
            rep = energy_traces(res.v, spec, res.grid, res.eps, constants=bc)
            T_int = min(opts.T, res.grid.T_max)
            report.update({
                f"{key}.eps": res.eps, f"{key}.F_value": res.F_value, f"{key}.converged": res.converged,
                f"{key}.iters": res.iters, f"{key}.pg_norm": res.final_pg_norm, f"{key}.M": res.grid.M,
                f"{key}.T_max": res.grid.T_max, f"{key}.E0": float(rep.E[0]),
                f"{key}.max_ode_residual": float(np.max(np.abs(rep.ode_residual))),
                f"{key}.I_integral_over_eps": rep.integral_I(res.grid.dt * int(T_int / res.grid.dt)) / res.eps,
                f"{key}.c_tilde": bc.c_tilde(T_int),
                f"{key}.Q_bound_excess": rep.q_bound_excess(bc.D3, bc.M_tilde1, bc.M_tilde2),
                f"{key}.within_bounds": bool(-bc.M1 <= res.F_value <= bc.M2),
            })
            if spec.dim == 1:
                files[f"wide_eps_{j}.csv"] = ("wide", res)
        last = results[-1]
        report["F_eps"] = last.F_value
        report["F_history_monotone"] = bool(np.all(np.diff(last.F_history) <= 0))
        if traj is not None:
            dist = compare_wide_vs_parabolic(results, traj, opts.T)
            report["distances"] = list(dist)
        elif spec.dim == 1:
            _trajectory_diagnostics(_as_trajectory(last), spec, opts, report)

    os.makedirs(out_dir, exist_ok=True)
    for name, (kind, obj) in files.items():
        path = os.path.join(out_dir, name)
        if kind == "traj":
            write_trajectory_csv(obj, path)
        else:
            write_field_csv(obj.grid.t_nodes, obj.grid.x_nodes[0], np.moveaxis(obj.v, 1, 0), path)
    write_report(report, os.path.join(out_dir, "report.txt"))
    with open(os.path.join(out_dir, "plot.py"), "w", encoding="utf-8") as fh:
        fh.write(PLOT_SCRIPT)
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="gpwide", description=__doc__)
    p.add_argument("--config", required=True, help="configuration file")
    p.add_argument("--mode", choices=("wide", "parabolic", "both"), help="override [run] mode")
    p.add_argument("--out-dir", help="override [run] out_dir")
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config key (section.key=value or key=value); repeatable")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        overrides = list(args.override)
        if args.mode:
            overrides.append(f"run.mode={args.mode}")
        spec, opts = load_config(args.config, overrides)
        if args.out_dir:
            opts = replace(opts, out_dir=args.out_dir)
        return run(spec, opts)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericsError as exc:
        print(f"numerics error: {exc}", file=sys.stderr)
        return EXIT_NUMERICS
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
