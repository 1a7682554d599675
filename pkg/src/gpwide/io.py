"""Bit-stable CSV and report writers.

Floats are written with 17 significant digits (``%.17g``), which round-trips
every double exactly.
"""
from __future__ import annotations

import csv
import math

import numpy as np

FLOAT_FMT = "%.17g"


def _fmt(x):
    return FLOAT_FMT % float(x)


def write_field_csv(times, x, states, path):
    """Rows (t, x, w_1..w_k), time-major; ``states`` has shape (n_t, k, N + 1)."""
    states = np.asarray(states, dtype=float)
    n_t, k, n_x = states.shape
    if len(times) != n_t or len(x) != n_x:
        raise ValueError("times/x do not match the state array")
    with open(path, "w", encoding="ascii", newline="") as fh:
        fh.write(",".join(["t", "x"] + [f"w_{i + 1}" for i in range(k)]) + "\n")
        for n in range(n_t):
            tn = _fmt(times[n])
            for j in range(n_x):
                fh.write(",".join([tn, _fmt(x[j])] + [_fmt(states[n, i, j]) for i in range(k)]) + "\n")


def write_trajectory_csv(traj, path):
    write_field_csv(traj.times, traj.x, traj.states, path)


def read_trajectory_csv(path):
    """Inverse of :func:`write_field_csv`: returns (times, x, states)."""
    with open(path, "r", encoding="ascii", newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if header[:2] != ["t", "x"]:
        raise ValueError("not a trajectory CSV")
    k = len(header) - 2
    data = np.array([[float(c) for c in r] for r in body])
    times = np.unique(data[:, 0])
    n_t = len(times)
    n_x = len(data) // n_t
    x = data[:n_x, 1]
    states = data[:, 2:].reshape(n_t, n_x, k).transpose(0, 2, 1)
    return times, x, states


def format_value(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return _fmt(v)
    if v is None:
        return "none"
    if isinstance(v, (list, tuple, np.ndarray)):
        return "[" + ", ".join(format_value(x) for x in v) + "]"
    return str(v)


def write_report(report: dict, path):
    """``key = value`` lines with keys sorted lexicographically."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for key in sorted(report):
            fh.write(f"{key} = {format_value(report[key])}\n")


def read_report(path):
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if " = " in line:
                key, val = line.rstrip("\n").split(" = ", 1)
                out[key] = val
    return out
