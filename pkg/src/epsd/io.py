"""CSV and JSON readers/writers. Every write goes to a temp file that is then renamed."""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path
from typing import Union

import numpy as np

from .core import CoefficientGrid, FrequencyAxis, ScaleAxis, SpectralGrid, TimeSeries

PathLike = Union[str, os.PathLike]
_FMT = "%.17g"


def atomic_write_text(path: PathLike, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header, columns) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    data = np.column_stack([np.asarray(c, dtype=float) for c in columns])
    np.savetxt(buf, data, fmt=_FMT, delimiter=",")
    return buf.getvalue()


def _read_csv(path: PathLike, header):
    with open(path, newline="") as fh:
        first = next(csv.reader(fh), None)
    if first is None or [h.strip() for h in first] != list(header):
        raise ValueError(f"{path}: expected header {','.join(header)}, got {first}")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] != len(header):
        raise ValueError(f"{path}: expected {len(header)} columns")
    return data.T


def write_json(path: PathLike, obj) -> None:
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path: PathLike):
    with open(path) as fh:
        return json.load(fh)


# ---------------------------------------------------------------------------
# Time series: time_s,value
# ---------------------------------------------------------------------------

SERIES_HEADER = ("time_s", "value")


def write_series(path: PathLike, ts: TimeSeries) -> None:
    atomic_write_text(path, _csv_text(SERIES_HEADER, [ts.times, ts.samples]))


def read_series(path: PathLike) -> TimeSeries:
    t, x = _read_csv(path, SERIES_HEADER)
    if t.size < 2:
        raise ValueError(f"{path}: need at least 2 samples")
    steps = np.diff(t)
    dt = float(np.mean(steps))
    if not np.allclose(steps, dt, rtol=1e-6, atol=0):
        raise ValueError(f"{path}: samples are not uniformly spaced")
    return TimeSeries(x, dt, t0=float(t[0]))


# ---------------------------------------------------------------------------
# Spectral grids: time_s,freq_hz,value (long format, time-major)
# ---------------------------------------------------------------------------

GRID_HEADER = ("time_s", "freq_hz", "value")


def write_grid(path: PathLike, grid: SpectralGrid) -> None:
    f = grid.freqs.values
    tt, ff = np.meshgrid(grid.times, f, indexing="ij")
    atomic_write_text(path, _csv_text(GRID_HEADER, [tt.ravel(), ff.ravel(), grid.values.T.ravel()]))


def _long_to_matrix(t, a, v, path):
    times = np.unique(t)
    axis = np.unique(a)
    if times.size * axis.size != v.size:
        raise ValueError(f"{path}: long-format rows do not fill a rectangular grid")
    order = np.lexsort((a, t))
    return times, axis, v[order].reshape(times.size, axis.size).T


def read_grid(path: PathLike, signed: bool = False) -> SpectralGrid:
    t, f, v = _read_csv(path, GRID_HEADER)
    times, freqs, values = _long_to_matrix(t, f, v, path)
    return SpectralGrid(FrequencyAxis(freqs), times, values, signed=signed or bool(np.any(values < 0)))


# ---------------------------------------------------------------------------
# Coefficients: time_s,axis_value,re,im plus a JSON sidecar describing the axis
# ---------------------------------------------------------------------------

COEF_HEADER = ("time_s", "axis_value", "re", "im")


def _sidecar(path: PathLike) -> Path:
    return Path(str(path) + ".json")


def write_coefficients(path: PathLike, coeffs: CoefficientGrid, extra=None) -> None:
    a = coeffs.axis.values
    tt, aa = np.meshgrid(coeffs.times, a, indexing="ij")
    v = coeffs.values.T.ravel()
    atomic_write_text(path, _csv_text(COEF_HEADER, [tt.ravel(), aa.ravel(), v.real, v.imag]))
    meta = {"axis": coeffs.axis_kind, "dropped_levels": list(coeffs.dropped_levels)}
    if isinstance(coeffs.axis, ScaleAxis):
        meta.update(c0=coeffs.axis.c0, s0=coeffs.axis.s0, levels=coeffs.axis.levels)
    if extra:
        meta.update(extra)
    write_json(_sidecar(path), meta)


def read_coefficients(path: PathLike) -> CoefficientGrid:
    t, a, re, im = _read_csv(path, COEF_HEADER)
    times, axis_vals, re_m = _long_to_matrix(t, a, re, path)
    _, _, im_m = _long_to_matrix(t, a, im, path)
    side = _sidecar(path)
    meta = read_json(side) if side.exists() else {"axis": "frequency"}
    if meta.get("axis") == "scale":
        axis = ScaleAxis(meta["c0"], meta["s0"], meta["levels"])
        if not np.allclose(axis.values, axis_vals, rtol=1e-12):
            raise ValueError(f"{path}: scale values disagree with the sidecar axis")
    else:
        axis = FrequencyAxis(axis_vals)
    return CoefficientGrid(
        axis, times, re_m + 1j * im_m, dropped_levels=tuple(meta.get("dropped_levels", ()))
    )
