"""
EPSD estimates from coefficient grids, time smoothing and ensemble statistics.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence

import numpy as np

from . import kernels
from .core import CoefficientGrid, FrequencyAxis, ScaleAxis, SpectralGrid
from .kernels import SpecError


def _power(coeffs: CoefficientGrid) -> np.ndarray:
    v = coeffs.values
    return v.real**2 + v.imag**2


def _check_kind(coeffs: CoefficientGrid, spec) -> None:
    want = "scale" if kernels.is_cwt(spec) else "frequency"
    if coeffs.axis_kind != want:
        raise SpecError(
            f"{spec.name} estimates need coefficients on a {want} axis, got a {coeffs.axis_kind} axis"
        )


def _cwt_frequency_grid(coeffs: CoefficientGrid, spec, values: np.ndarray) -> SpectralGrid:
    # scales increase with level, so mapped frequencies decrease: flip rows
    freqs = kernels.scale_to_freq(spec, coeffs.axis.values)[::-1]
    validity = None if coeffs.validity is None else coeffs.validity[::-1]
    return SpectralGrid(FrequencyAxis(freqs), coeffs.times, values[::-1], validity=validity)


def epsd_estimate(coeffs: CoefficientGrid, spec) -> SpectralGrid:
    """Single-realization EPSD estimate, ``|coefficient|^2`` times the
    transform's coefficient normalization.

    CWT estimates are reported at the mapped frequencies ``f0/s`` in
    increasing order.
    """
    _check_kind(coeffs, spec)
    power = _power(coeffs)
    if kernels.is_stft(spec):
        values = power * kernels.norm_constants(spec).coef_scale
    elif kernels.is_st(spec):
        values = power * kernels.st_coef_scale(spec, coeffs.axis.values)[:, None]
    else:
        values = power * kernels.norm_constants(spec).coef_scale
        return _cwt_frequency_grid(coeffs, spec, values)
    return SpectralGrid(coeffs.axis, coeffs.times, values, validity=coeffs.validity)


def scalogram_to_freq(coeffs: CoefficientGrid, spec) -> SpectralGrid:
    """Energy-preserving CWT density on the frequency axis,
    ``|x_w|^2 |ds/df| / (s^2 C_psi)`` with ``|ds/df| = f0/f^2``.
    """
    if not kernels.is_cwt(spec):
        raise SpecError(f"scalogram_to_freq needs a wavelet spec, got {spec.name}")
    _check_kind(coeffs, spec)
    const = kernels.norm_constants(spec)
    s = coeffs.axis.values
    f = kernels.scale_to_freq(spec, s)
    jac = const.f0 / f**2
    values = _power(coeffs) * (jac / (s**2 * const.c_psi))[:, None]
    return _cwt_frequency_grid(coeffs, spec, values)


def smooth_time(grid: SpectralGrid, halfwidth: float) -> SpectralGrid:
    """Moving average along time with a unit-mass box of the given halfwidth.

    Near the ends the box is truncated and renormalized, so constant rows are
    left unchanged.
    """
    if halfwidth < 0:
        raise ValueError("halfwidth must be >= 0")
    times = grid.times
    if times.size > 1 and halfwidth > times[-1] - times[0]:
        raise ValueError(
            f"halfwidth {halfwidth:g} s exceeds the record duration {times[-1] - times[0]:g} s"
        )
    if halfwidth == 0 or times.size == 1:
        return grid
    step = float(np.median(np.diff(times)))
    k = int(round(halfwidth / step))
    if k == 0:
        return grid
    v = grid.values
    n = v.shape[1]
    csum = np.concatenate([np.zeros((v.shape[0], 1)), np.cumsum(v, axis=1)], axis=1)
    lo = np.clip(np.arange(n) - k, 0, n)
    hi = np.clip(np.arange(n) + k + 1, 0, n)
    smoothed = (csum[:, hi] - csum[:, lo]) / (hi - lo)
    if not grid.signed:
        smoothed = np.maximum(smoothed, 0.0)
    return grid.with_values(smoothed)


# ---------------------------------------------------------------------------
# Ensemble statistics
# ---------------------------------------------------------------------------


class RunningStats:
    """Streaming mean and sum of squared deviations (Welford / Chan).

    Merging is deterministic for a fixed merge tree, which keeps ensemble
    results bit-stable however records are spread over workers.
    """

    def __init__(self, shape=None):
        self.count = 0
        self.mean = None if shape is None else np.zeros(shape)
        self.m2 = None if shape is None else np.zeros(shape)

    def add(self, values: np.ndarray) -> None:
        values = np.asarray(values, dtype=float)
        if self.mean is None:
            self.mean = np.zeros(values.shape)
            self.m2 = np.zeros(values.shape)
        self.count += 1
        delta = values - self.mean
        self.mean += delta / self.count
        self.m2 += delta * (values - self.mean)

    @staticmethod
    def merge(a: "RunningStats", b: "RunningStats") -> "RunningStats":
        if a.count == 0:
            return b
        if b.count == 0:
            return a
        out = RunningStats()
        out.count = a.count + b.count
        delta = b.mean - a.mean
        out.mean = a.mean + delta * (b.count / out.count)
        out.m2 = a.m2 + b.m2 + delta**2 * (a.count * b.count / out.count)
        return out

    @staticmethod
    def pairwise(parts: Sequence["RunningStats"]) -> "RunningStats":
        parts = list(parts)
        if not parts:
            return RunningStats()
        while len(parts) > 1:
            nxt = [RunningStats.merge(parts[i], parts[i + 1]) for i in range(0, len(parts) - 1, 2)]
            if len(parts) % 2:
                nxt.append(parts[-1])
            parts = nxt
        return parts[0]

    def std(self) -> np.ndarray:
        if self.count < 2:
            raise ValueError("standard deviation needs at least 2 samples")
        return np.sqrt(np.maximum(self.m2, 0.0) / (self.count - 1))


@dataclass(frozen=True)
class EnsembleStats:
    mean: SpectralGrid
    std: SpectralGrid
    count: int


def ensemble_stats(grids: Iterable[SpectralGrid]) -> EnsembleStats:
    """Pointwise sample mean and (n-1)-normalized standard deviation."""
    grids = list(grids)
    if len(grids) < 2:
        raise ValueError("ensemble statistics need at least 2 grids")
    ref = grids[0]
    leaves: List[RunningStats] = []
    for g in grids:
        if not ref.same_axes(g):
            raise ValueError("ensemble grids do not share identical axes")
        leaf = RunningStats()
        leaf.add(g.values)
        leaves.append(leaf)
    acc = RunningStats.pairwise(leaves)
    signed = any(g.signed for g in grids)
    mean = SpectralGrid(ref.freqs, ref.times, acc.mean, signed=signed, validity=ref.validity)
    std = SpectralGrid(ref.freqs, ref.times, acc.std(), validity=ref.validity)
    return EnsembleStats(mean, std, acc.count)


# ---------------------------------------------------------------------------
# Regridding
# ---------------------------------------------------------------------------


def log_interp_weights(src_freqs, dst_freqs):
    """Row indices and weights for piecewise-linear interpolation in log f.

    Returns ``(lo, w_lo, w_hi, inside)``: destination row ``i`` equals
    ``w_lo[i] * src[lo[i]] + w_hi[i] * src[lo[i] + 1]`` wherever ``inside[i]``.
    """
    src = np.log(np.asarray(src_freqs, dtype=float))
    dst_f = np.asarray(dst_freqs, dtype=float)
    inside = (dst_f >= np.exp(src[0]) * (1 - 1e-12)) & (dst_f <= np.exp(src[-1]) * (1 + 1e-12))
    dst = np.log(np.where(dst_f > 0, dst_f, np.exp(src[0])))
    lo = np.clip(np.searchsorted(src, dst, side="right") - 1, 0, src.size - 2)
    span = src[lo + 1] - src[lo]
    w_hi = np.clip((dst - src[lo]) / span, 0.0, 1.0)
    w_lo = 1.0 - w_hi
    return lo, np.where(inside, w_lo, 0.0), np.where(inside, w_hi, 0.0), inside


def resample_log_freq(grid: SpectralGrid, freqs) -> SpectralGrid:
    """Interpolate a grid onto ``freqs``, linearly in log-frequency.

    Frequencies outside the source range get value 0 and validity 0.
    """
    axis = freqs if isinstance(freqs, FrequencyAxis) else FrequencyAxis(freqs)
    if len(grid.freqs) < 2:
        raise ValueError("resampling needs at least two source frequencies")
    lo, w_lo, w_hi, inside = log_interp_weights(grid.freqs.values, axis.values)
    v = grid.values
    values = w_lo[:, None] * v[lo] + w_hi[:, None] * v[lo + 1]
    validity: Optional[np.ndarray] = None
    if grid.validity is not None:
        val = grid.validity
        validity = np.minimum(val[lo], val[lo + 1]) * inside[:, None]
    else:
        validity = np.broadcast_to(inside[:, None].astype(float), values.shape)
    return SpectralGrid(axis, grid.times, values, signed=grid.signed, validity=validity)
