"""
Monte Carlo study: simulate a shared ensemble, estimate every record with each
transform, reduce to mean/std, compare with the target EPSD, and build
residual grids.

Records are processed in fixed-size chunks. Each chunk reduces sequentially
and chunks are merged pairwise in chunk order, so results are bit-identical
for any number of workers.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import kernels, residuals
from .core import FrequencyAxis, SpectralGrid, TimeSeries
from .estimators import RunningStats, epsd_estimate, resample_log_freq
from .simulator import EpsdModel, resolve_workers, srm_plan, srm_record
from .transforms import default_scale_axis, transform

logger = logging.getLogger(__name__)

VALIDITY_MIN = 0.9
CHUNK = 50


def figure8_preset(n: int = 1075, dt: float = 0.02) -> List:
    """Box h=1, Gaussian sigma=1, ST kappa=1, HW (1, sqrt 2) and GMW (20, 3)."""
    hw = kernels.CwtHarmonic(1.0, float(np.sqrt(2.0)))
    gmw = kernels.CwtMorse(20.0, 3.0)
    return [
        kernels.StftBox(1.0),
        kernels.StftGauss(1.0),
        kernels.STrans(1.0),
        kernels.with_scale_axis(hw, default_scale_axis(hw, n, dt)),
        kernels.with_scale_axis(gmw, default_scale_axis(gmw, n, dt)),
    ]


PRESETS = {"figure8": figure8_preset}


@dataclass
class SpecResult:
    spec: object
    mean: SpectralGrid
    std: SpectralGrid
    diff: SpectralGrid
    target: SpectralGrid
    mask: np.ndarray  # cells used in aggregate comparisons
    dropped_levels: tuple = ()


@dataclass
class McResult:
    freqs: FrequencyAxis
    times: np.ndarray
    n_samples: int
    seed: int
    results: Dict[str, SpecResult] = field(default_factory=dict)
    failures: Dict[str, str] = field(default_factory=dict)


def _estimate_on_axis(ts: TimeSeries, spec, axis: FrequencyAxis):
    coeffs = transform(ts, spec, axis)
    est = epsd_estimate(coeffs, spec)
    if kernels.is_cwt(spec):
        est = resample_log_freq(est, axis)
    return est, coeffs.dropped_levels


def _chunk_stats(args):
    plan, seed, start, stop, specs, axis, t0 = args
    stats = [RunningStats() for _ in specs]
    for i in range(start, stop):
        ts = TimeSeries(srm_record(plan, seed, i), plan.dt, t0)
        for acc, spec in zip(stats, specs):
            est, _ = _estimate_on_axis(ts, spec, axis)
            acc.add(est.values)
    return stats


def unique_labels(specs) -> List[str]:
    """``kernels.label`` per spec, suffixed ``_2``, ``_3`` ... on repeats."""
    seen: Dict[str, int] = {}
    out = []
    for spec in specs:
        name = kernels.label(spec)
        seen[name] = seen.get(name, 0) + 1
        out.append(name if seen[name] == 1 else f"{name}_{seen[name]}")
    return out


def analysis_mask(validity: np.ndarray, freqs, df: float) -> np.ndarray:
    """Cells with validity >= 0.9 and frequency >= 2 df."""
    return (validity >= VALIDITY_MIN) & (np.asarray(freqs)[:, None] >= 2 * df)


def run_mc(
    model: EpsdModel,
    specs: Sequence,
    n_samples: int,
    dt: float,
    seed: int,
    workers: Optional[int] = None,
    chunk: int = CHUNK,
) -> McResult:
    """Ensemble mean/std of each spec's EPSD estimate and its difference from the target.

    All specs see the same records. Estimates live on the positive DFT bins of
    the record; CWT estimates are interpolated there in log-frequency.
    """
    if n_samples < 2:
        raise ValueError("n_samples must be >= 2")
    plan = srm_plan(model, dt)
    n = plan.n
    axis = FrequencyAxis.dft_bins(n, dt)
    times = dt * np.arange(n)
    out = McResult(axis, times, n_samples, seed)

    probe = TimeSeries(srm_record(plan, seed, 0), dt)
    ok_specs, names, validity, dropped = [], [], [], []
    for spec, name in zip(specs, unique_labels(specs)):
        try:
            est, drop = _estimate_on_axis(probe, spec, axis)
        except (ValueError, ArithmeticError) as exc:
            logger.warning("%s failed: %s", name, exc)
            out.failures[name] = str(exc)
            continue
        ok_specs.append(spec)
        names.append(name)
        validity.append(est.validity)
        dropped.append(drop)
    if not ok_specs:
        return out

    bounds = [(s, min(s + chunk, n_samples)) for s in range(0, n_samples, chunk)]
    tasks = [(plan, seed, a, b, ok_specs, axis, 0.0) for a, b in bounds]
    workers = resolve_workers(workers)
    if workers == 1:
        parts = [_chunk_stats(t) for t in tasks]
    else:
        with ProcessPoolExecutor(workers) as pool:
            parts = list(pool.map(_chunk_stats, tasks))

    target = model.grid(axis.values, times)
    df = 1.0 / (n * dt)
    for k, spec in enumerate(ok_specs):
        acc = RunningStats.pairwise([p[k] for p in parts])
        val = validity[k]
        mean = SpectralGrid(axis, times, acc.mean, validity=val)
        out.results[names[k]] = SpecResult(
            spec=spec,
            mean=mean,
            std=SpectralGrid(axis, times, acc.std(), validity=val),
            diff=SpectralGrid(axis, times, acc.mean - target, signed=True, validity=val),
            target=SpectralGrid(axis, times, target),
            mask=analysis_mask(val, axis.values, df),
            dropped_levels=dropped[k],
        )
    return out


# ---------------------------------------------------------------------------
# Aggregate metrics
# ---------------------------------------------------------------------------


def _pearson(a, b) -> float:
    return float(np.corrcoef(a, b)[0, 1])


def power_ratio(res: SpecResult) -> float:
    """Masked ``sum(mean) / sum(target)``; the common cell area cancels."""
    m = res.mask
    return float(res.mean.values[m].sum() / res.target.values[m].sum())


def time_marginal(res: SpecResult):
    """Two-sided ``int mean df`` per column over masked cells, and the columns used."""
    m = res.mask
    df = float(np.diff(res.mean.freqs.values[:2])[0])
    cols = m.any(axis=0)
    prof = 2.0 * df * np.where(m, res.mean.values, 0.0).sum(axis=0)
    return prof[cols], cols


def time_marginal_corr(res: SpecResult, intensity) -> float:
    """Pearson r between the masked time marginal and ``intensity(t)``."""
    prof, cols = time_marginal(res)
    return _pearson(prof, intensity(res.mean.times[cols]))


def freq_marginal_corr(res: SpecResult, t: float = 8.0) -> float:
    """Pearson r between the mean estimate and the target along the column nearest ``t``."""
    q = int(np.argmin(np.abs(res.mean.times - t)))
    rows = res.mask[:, q]
    return _pearson(res.mean.values[rows, q], res.target.values[rows, q])


def summary(mc: McResult, intensity=None, t_slice: float = 8.0) -> dict:
    """JSON-ready aggregate metrics per spec."""
    out = {"n_samples": mc.n_samples, "seed": mc.seed, "failures": dict(mc.failures), "specs": {}}
    for name, res in mc.results.items():
        d = res.diff.values[res.mask]
        tgt = res.target.values[res.mask]
        entry = {
            "spec": kernels.spec_to_dict(res.spec),
            "masked_cells": int(res.mask.sum()),
            "power_ratio": power_ratio(res),
            "mean_abs_diff_rel": float(np.abs(d).sum() / tgt.sum()),
            "freq_marginal_r": freq_marginal_corr(res, t_slice),
            "dropped_levels": list(res.dropped_levels),
        }
        if intensity is not None:
            entry["time_marginal_r"] = time_marginal_corr(res, intensity)
        out["specs"][name] = entry
    return out


# ---------------------------------------------------------------------------
# Residual study
# ---------------------------------------------------------------------------


def run_residual_study(
    model: EpsdModel, specs: Sequence, freqs, times, band: Optional[float] = None
) -> Dict[str, Dict[int, SpectralGrid]]:
    """Signed residual grids per spec: order 2 for STFT/ST, orders 1 and 2 for CWT.

    ``band`` is the box-window integration limit (the Nyquist frequency of the
    analysis is the natural choice).
    """
    out = {}
    for spec, name in zip(specs, unique_labels(specs)):
        orders = (1, 2) if kernels.is_cwt(spec) else (2,)
        out[name] = {
            o: residuals.residual_grid(model, spec, freqs, times, o, band=band) for o in orders
        }
    return out
