"""File formats for sampled symbols, operator matrices, and traces.

Sampled symbols go to a columnar binary layout: rows of four little-endian
float64 values (t, x, xi, value) with a JSON sidecar describing the layout.
Dense operators go to row-major little-endian complex128 with a sidecar
carrying the shape.  CSV emission is deterministic: fixed column order,
fixed float formatting, no wall-clock anywhere.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

SYMBOL_DTYPE = "<f8"
OPERATOR_DTYPE = "<c16"


def _sidecar_path(path: Path) -> Path:
    return path.with_suffix(path.suffix + ".json")


def write_symbol_grid(path, t, x, xi, values, label: str = "",
                      meta: dict | None = None) -> Path:
    """Write aligned samples as (t, x, xi, value) float64 rows plus sidecar.

    Values must be real; the weight symbols this lab constructs are.
    """
    path = Path(path)
    t, x, xi = np.broadcast_arrays(np.asarray(t, float), np.asarray(x, float),
                                   np.asarray(xi, float))
    values = np.asarray(values)
    if np.iscomplexobj(values):
        if np.max(np.abs(values.imag)) > 1e-12 * max(np.max(np.abs(values)), 1e-300):
            raise ValueError("symbol grid export expects real values")
        values = values.real
    values = np.broadcast_to(np.asarray(values, float), t.shape)
    table = np.column_stack([t.ravel(), x.ravel(), xi.ravel(), values.ravel()])
    table.astype(SYMBOL_DTYPE).tofile(path)
    sidecar = {
        "format": "gevolab-symbol-grid",
        "layout": ["t", "x", "xi", "value"],
        "dtype": SYMBOL_DTYPE,
        "order": "C",
        "rows": int(table.shape[0]),
        "label": label,
    }
    if meta:
        sidecar["meta"] = meta
    _sidecar_path(path).write_text(json.dumps(sidecar, indent=1) + "\n")
    return path


def read_symbol_grid(path):
    path = Path(path)
    sidecar = json.loads(_sidecar_path(path).read_text())
    raw = np.fromfile(path, dtype=sidecar["dtype"])
    table = raw.reshape(sidecar["rows"], len(sidecar["layout"]))
    return {name: table[:, i].copy()
            for i, name in enumerate(sidecar["layout"])}, sidecar


def write_operator_matrix(path, matrix, label: str = "",
                          meta: dict | None = None) -> Path:
    """Write a dense complex operator, row-major complex128 little-endian."""
    path = Path(path)
    matrix = np.ascontiguousarray(np.asarray(matrix, dtype=OPERATOR_DTYPE))
    matrix.tofile(path)
    sidecar = {
        "format": "gevolab-operator",
        "dtype": OPERATOR_DTYPE,
        "order": "C",
        "shape": list(matrix.shape),
        "label": label,
    }
    if meta:
        sidecar["meta"] = meta
    _sidecar_path(path).write_text(json.dumps(sidecar, indent=1) + "\n")
    return path


def read_operator_matrix(path):
    path = Path(path)
    sidecar = json.loads(_sidecar_path(path).read_text())
    raw = np.fromfile(path, dtype=sidecar["dtype"])
    return raw.reshape(*sidecar["shape"]), sidecar


def write_spectrum_snapshots(path, snapshots, xi_grid, label: str = "",
                             meta: dict | None = None) -> Path:
    """Spectrum snapshots in the symbol-grid layout; x column unused (0)."""
    ts, xs, xis, vals = [], [], [], []
    for t_snap, spectrum in snapshots:
        ts.append(np.full(xi_grid.shape, t_snap))
        xs.append(np.zeros(xi_grid.shape))
        xis.append(xi_grid)
        vals.append(spectrum)
    meta = dict(meta or {})
    meta["x_column"] = "unused (0.0)"
    return write_symbol_grid(path, np.concatenate(ts), np.concatenate(xs),
                             np.concatenate(xis), np.concatenate(vals),
                             label=label, meta=meta)


def fmt_number(value) -> str:
    """Deterministic CSV cell: finite shortest-repr, else 'nan'/'overflow'."""
    if value is None:
        return "nan"
    value = float(value)
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "overflow"
    return repr(value)


def write_csv(path, columns: list[str], rows) -> Path:
    """Write rows of numbers with the declared column order."""
    path = Path(path)
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(fmt_number(cell) for cell in row))
    path.write_text("\n".join(lines) + "\n")
    return path
