"""Plain-text column export for gnuplot and friends."""
from __future__ import annotations

import csv
import json

import numpy as np

from ..spectral import GridFunction, eval_at

KINDS = ("field", "section", "exponents", "lap")


def _fmt_rows(rows) -> str:
    return "".join(" ".join(format(float(v), ".12e") for v in row) + "\n" for row in rows)


def read_trajectory_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a grid-space trajectory CSV (columns t, x_0 .. x_{N-1})."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    if len(header) < 2 or header[0] != "t" or not header[1].startswith("x_"):
        raise ValueError(f"{path} is not a grid-space trajectory CSV")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0], data[:, 1:]


def field_columns(times, states) -> str:
    """One row per sample: t followed by the N grid values."""
    return "# t u(x_0) ... u(x_{N-1})\n" + _fmt_rows(np.column_stack([times, states]))


def section_columns(times, states, x0: float) -> str:
    vals = [float(eval_at(GridFunction(u), x0)) for u in states]
    return f"# t u(t,{x0:.12e})\n" + _fmt_rows(zip(times, vals))


def exponent_columns(path) -> str:
    """Convergence history written by the spectrum command (CSV: t, lambda_1..lambda_m)."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    m = data.shape[1] - 1
    return "# t " + " ".join(f"lambda_{i + 1}" for i in range(m)) + "\n" + _fmt_rows(data)


def lap_columns(path) -> str:
    """Lap CSV (t, count, simple, indeterminate) to two columns; collapsed samples are dropped."""
    rows = []
    with open(path) as fh:
        for rec in csv.DictReader(fh):
            c = int(rec["count"])
            if c >= 0 and rec["simple"] in ("1", "True", "true"):
                rows.append((float(rec["t"]), c))
    return "# t z\n" + "".join(f"{t:.12e} {c:d}\n" for t, c in rows)


def export(kind: str, path, x0: float | None = None) -> str:
    if kind not in KINDS:
        raise ValueError(f"unknown plot kind {kind!r}; choose from {', '.join(KINDS)}")
    if kind == "exponents":
        return exponent_columns(path)
    if kind == "lap":
        return lap_columns(path)
    times, states = read_trajectory_csv(path)
    if kind == "field":
        return field_columns(times, states)
    if x0 is None:
        raise ValueError("kind=section needs --x0")
    return section_columns(times, states, x0)


def load_json(path):
    with open(path) as fh:
        return json.load(fh)
