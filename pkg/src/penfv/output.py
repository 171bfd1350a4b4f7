"""Diagnostic CSV and legacy-VTK snapshot files."""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .diagnostics import CSV_COLUMNS
from .mesh import DomainMask
from .scheme import State


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))  # shortest round-trip decimal


def write_diagnostics_csv(reports, path: str | Path) -> Path:
    """Header plus one row per report (BalanceReport or mapping)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for rep in reports:
            row = rep.row() if hasattr(rep, "row") else rep
            w.writerow([_cell(row[c]) for c in CSV_COLUMNS])
    return path


def read_diagnostics_csv(path: str | Path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for r in rows:
        out.append({k: (int(v) if k in ("step", "newton_iters") else float(v)) for k, v in r.items()})
    return out


def _vtk_order(a: np.ndarray) -> np.ndarray:
    """Flatten with the first index varying fastest, as VTK expects."""
    return np.asarray(a).ravel(order="F")


def write_snapshot(state: State, mask: DomainMask, path: str | Path) -> Path:
    """Legacy-VTK STRUCTURED_POINTS (ASCII) with cell data rho, theta, mask, u."""
    g = mask.grid
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    dims = [g.n + 1] * g.dim + [1] * (3 - g.dim)
    spacing = [g.h] * g.dim + [1.0] * (3 - g.dim)
    lines = [
        "# vtk DataFile Version 3.0",
        f"penfv step {state.step} t {state.t!r}",
        "ASCII",
        "DATASET STRUCTURED_POINTS",
        "DIMENSIONS " + " ".join(str(d) for d in dims),
        "ORIGIN 0 0 0",
        "SPACING " + " ".join(repr(s) for s in spacing),
        f"CELL_DATA {g.ncells}",
    ]
    for name, arr in (("rho", state.rho), ("theta", state.theta), ("mask", mask.indicator)):
        lines.append(f"SCALARS {name} double 1")
        lines.append("LOOKUP_TABLE default")
        lines.extend(repr(float(v)) for v in _vtk_order(arr))
    lines.append("VECTORS u double")
    comps = [_vtk_order(state.u[i]) for i in range(g.dim)]
    zero = np.zeros(g.ncells)
    comps += [zero] * (3 - g.dim)
    lines.extend(" ".join(repr(float(c[k])) for c in comps) for k in range(g.ncells))
    path.write_text("\n".join(lines) + "\n")
    return path


def read_snapshot(path: str | Path) -> dict:
    """Parse a file written by :func:`write_snapshot` back into arrays."""
    tokens = Path(path).read_text().splitlines()
    header = {}
    i = 0
    while i < len(tokens) and not tokens[i].startswith("CELL_DATA"):
        parts = tokens[i].split()
        if parts and parts[0] in ("DIMENSIONS", "SPACING", "ORIGIN"):
            header[parts[0]] = [float(x) for x in parts[1:]]
        i += 1
    ncells = int(tokens[i].split()[1])
    i += 1
    dims = [int(d) - 1 for d in header["DIMENSIONS"] if int(d) > 1]
    shape = tuple(dims)
    out = {"dimensions": header["DIMENSIONS"], "spacing": header["SPACING"], "origin": header["ORIGIN"]}
    while i < len(tokens):
        parts = tokens[i].split()
        if not parts:
            i += 1
            continue
        if parts[0] == "SCALARS":
            name = parts[1]
            vals = np.array([float(x) for x in tokens[i + 2 : i + 2 + ncells]])
            out[name] = vals.reshape(shape, order="F")
            i += 2 + ncells
        elif parts[0] == "VECTORS":
            vals = np.array([[float(x) for x in line.split()] for line in tokens[i + 1 : i + 1 + ncells]])
            out[parts[1]] = np.stack([vals[:, c].reshape(shape, order="F") for c in range(len(shape))])
            i += 1 + ncells
        else:
            i += 1
    return out
