"""
STFT, S-transform and CWT coefficient grids.

The STFT and S-transform are both windowed Fourier transforms,

    x(f, tau) = dt * sum_p x_p w_f(tau - t_p) exp(-i 2 pi f t_p),

and are evaluated by zero-padded FFT convolution of the record with the
modulated window ``w_f(u) exp(i 2 pi f u)``. The padding is long enough that the
circular convolution equals the linear one, so near the record ends the window
is simply truncated. Each cell carries the fraction of window mass that fell
inside the record.

The CWT follows the discrete frequency-domain sum over the record's DFT,

    x_w(s_j, q dt) = sqrt(s_j) / N * sum_k X_k conj(psi_hat(s_j f_k)) exp(i 2 pi k q / N),

with signed bin frequencies ``f_k`` (analytic wavelets see only f > 0).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Optional, Tuple

import numpy as np
import scipy.fft as sfft

from . import kernels
from .core import CoefficientGrid, FrequencyAxis, ScaleAxis, TimeSeries
from .kernels import SpecError

logger = logging.getLogger(__name__)

_GAUSS_TAIL = 8.1  # window < 1e-14 of its peak beyond this many std
_ROW_CHUNK = 256


def _as_freq_axis(freqs, ts: TimeSeries) -> FrequencyAxis:
    if freqs is None:
        return FrequencyAxis.dft_bins(ts.n, ts.dt)
    if isinstance(freqs, FrequencyAxis):
        return freqs
    freqs = np.atleast_1d(np.asarray(freqs, dtype=float))
    if freqs.size == 0:
        raise ValueError("empty frequency axis")
    return FrequencyAxis(freqs)


# ---------------------------------------------------------------------------
# Windowed transforms (STFT and S-transform)
# ---------------------------------------------------------------------------


@dataclass
class _RowGroup:
    rows: np.ndarray  # indices into the frequency axis
    m: int  # padded FFT length
    kernel_ft: np.ndarray  # FFT of the modulated, wrapped window, (rows, m)
    phase: np.ndarray  # exp(-i 2 pi f tau) * dt, (rows, n)


@dataclass
class _WindowPlan:
    groups: List[_RowGroup]
    validity: np.ndarray  # (freqs, n)


def _window_halfwidth(spec, f, dt) -> np.ndarray:
    """Half-support of the sampled window in samples, one value per frequency."""
    f = np.asarray(f, dtype=float)
    if isinstance(spec, kernels.StftBox):
        w = np.floor(spec.h / dt * (1 + 1e-12))
        return np.full(f.shape, w)
    if isinstance(spec, kernels.StftGauss):
        sigma = np.full(f.shape, spec.sigma)
    else:
        sigma = kernels._st_sigma(spec, f)
    return np.ceil(_GAUSS_TAIL * sigma / dt)


def _window_total_mass(spec, f, dt, halfwidth) -> np.ndarray:
    """Untruncated ``sum_r w(r dt)`` per frequency, used to normalize validity."""
    if isinstance(spec, kernels.StftBox):
        return (2 * halfwidth + 1) * 0.5 / spec.h
    # unit-area Gaussians: the Riemann sum is 1/dt up to exp(-2 pi^2 sigma^2/dt^2)
    out = np.empty(np.shape(f))
    for i, (fi, w) in enumerate(zip(np.atleast_1d(f), np.atleast_1d(halfwidth))):
        r = np.arange(-w, w + 1) * dt
        out[i] = kernels.window_time(spec, r, fi).sum()
    return out


@lru_cache(maxsize=32)
def _window_plan(spec, freqs_key: bytes, n: int, dt: float, t0: float) -> _WindowPlan:
    freqs = np.frombuffer(freqs_key, dtype=float)
    halfwidth = _window_halfwidth(spec, freqs, dt)
    used = np.minimum(halfwidth, n - 1).astype(int)
    lengths = np.array([sfft.next_fast_len(int(n + w)) for w in used])
    total = _window_total_mass(spec, freqs, dt, halfwidth)
    validity = np.empty((freqs.size, n))
    taus = t0 + dt * np.arange(n)

    groups = []
    for m in np.unique(lengths):
        rows = np.flatnonzero(lengths == m)
        r = np.fft.fftfreq(m, 1.0 / m)  # signed integer offsets in FFT order
        ones_ft = sfft.fft(np.ones(n), m)
        kernel_ft = np.empty((rows.size, m), dtype=complex)
        for i, row in enumerate(rows):
            f = freqs[row]
            keep = np.abs(r) <= used[row]
            w = np.where(keep, kernels.window_time(spec, r * dt, f if kernels.is_st(spec) else None), 0.0)
            kernel_ft[i] = sfft.fft(w * np.exp(2j * np.pi * f * r * dt))
            inside = sfft.ifft(ones_ft * sfft.fft(w)).real[:n]
            # FFT roundoff is ~1e-16; a clean flag makes the 0.9 threshold exact
            validity[row] = np.clip(np.round(inside / total[row], 12), 0.0, 1.0)
        phase = dt * np.exp(-2j * np.pi * np.outer(freqs[rows], taus))
        groups.append(_RowGroup(rows, int(m), kernel_ft, phase))
    return _WindowPlan(groups, validity)


def _windowed_values(ts: TimeSeries, plan: _WindowPlan, nfreq: int) -> np.ndarray:
    out = np.empty((nfreq, ts.n), dtype=complex)
    for g in plan.groups:
        x_ft = sfft.fft(ts.samples, g.m)
        for start in range(0, g.rows.size, _ROW_CHUNK):
            sl = slice(start, start + _ROW_CHUNK)
            conv = sfft.ifft(g.kernel_ft[sl] * x_ft, axis=1)[:, : ts.n]
            out[g.rows[sl]] = conv * g.phase[sl]
    return out


def _windowed(ts: TimeSeries, spec, axis: FrequencyAxis) -> CoefficientGrid:
    plan = _window_plan(spec, axis.values.tobytes(), ts.n, ts.dt, ts.t0)
    values = _windowed_values(ts, plan, len(axis))
    return CoefficientGrid(axis, ts.times, values, validity=plan.validity)


def stft(ts: TimeSeries, spec, freqs=None) -> CoefficientGrid:
    """Short-time Fourier transform with a box or Gaussian window.

    One column per sample (hop of one sample); ``freqs`` defaults to the
    positive DFT bins up to Nyquist.
    """
    if not kernels.is_stft(spec):
        raise SpecError(f"stft needs a box or Gaussian window spec, got {spec.name}")
    width = 2 * spec.h if isinstance(spec, kernels.StftBox) else 4 * spec.sigma
    if width > ts.duration:
        raise ValueError(
            f"window width {width:g} s is not resolvable within a {ts.duration:g} s record"
        )
    return _windowed(ts, spec, _as_freq_axis(freqs, ts))


def s_transform(ts: TimeSeries, spec, freqs=None) -> CoefficientGrid:
    """S-transform with Gaussian voice windows of time width ``kappa/f`` (or ``K(f)/f``)."""
    if not kernels.is_st(spec):
        raise SpecError(f"s_transform needs an S-transform spec, got {spec.name}")
    axis = _as_freq_axis(freqs, ts)
    if np.any(axis.values == 0):
        raise SpecError(
            "S-transform frequency axis contains 0 Hz, where the voice window "
            "(time width kappa/|f|) is degenerate"
        )
    kernels._st_sigma(spec, axis.values)  # validates K(f) on the axis
    return _windowed(ts, spec, axis)


# ---------------------------------------------------------------------------
# Continuous wavelet transform
# ---------------------------------------------------------------------------


def default_scale_axis(spec, n: int, dt: float) -> ScaleAxis:
    """Scale grid used when a CWT spec carries none.

    Starts from ``c0 = 0.01`` and extends until the mapped frequency drops
    below ``2/(n dt)``.
    """
    s0 = np.sqrt(2.0) if isinstance(spec, kernels.CwtHarmonic) else 2.0**0.1
    c0 = 0.01
    f0 = kernels.center_frequency(spec)
    s_max = f0 * n * dt / 2.0
    levels = int(np.floor(np.log(s_max / c0) / np.log(s0))) + 1
    return ScaleAxis(c0, s0, max(levels, 1))


def resolvable_levels(spec, axis: ScaleAxis, dt: float) -> Tuple[np.ndarray, np.ndarray]:
    """Split level indices into those mapped at or below Nyquist and the rest."""
    f = kernels.scale_to_freq(spec, axis.values)
    ok = f <= 0.5 / dt * (1 + 1e-12)
    return np.flatnonzero(ok), np.flatnonzero(~ok)


def _wavelet_energy_validity(spec, scales, n, dt) -> np.ndarray:
    """Fraction of each scaled wavelet's energy that lies inside the record."""
    long = sfft.next_fast_len(8 * n)
    f = np.fft.fftfreq(long, dt)
    r = np.fft.fftfreq(long, 1.0 / long).astype(int)
    order = np.argsort(r)
    r_sorted = r[order]
    q = np.arange(n)
    out = np.empty((len(scales), n))
    for i, s in enumerate(scales):
        psi_t = sfft.ifft(kernels.wavelet_ft(spec, s * f))
        energy = np.abs(psi_t[order]) ** 2
        cum = np.concatenate(([0.0], np.cumsum(energy)))
        # cells q use offsets r in [-q, n-1-q]
        lo = np.searchsorted(r_sorted, -q)
        hi = np.searchsorted(r_sorted, n - 1 - q, side="right")
        out[i] = np.clip(np.round((cum[hi] - cum[lo]) / cum[-1], 12), 0.0, 1.0)
    return out


@dataclass
class _CwtPlan:
    axis: ScaleAxis
    dropped: Tuple[int, ...]
    filters: np.ndarray  # sqrt(s) conj(psi_hat(s f_k)), (levels, n)
    validity: np.ndarray


@lru_cache(maxsize=16)
def _cwt_plan(spec, axis: ScaleAxis, n: int, dt: float) -> _CwtPlan:
    kept, dropped = resolvable_levels(spec, axis, dt)
    if kept.size == 0:
        raise ValueError("every scale level maps above the Nyquist frequency")
    if dropped.size:
        logger.warning(
            "%s: dropped %d scale level(s) above Nyquist: %s",
            spec.name, dropped.size, dropped.tolist(),
        )
    j0 = int(kept[0])
    sub = ScaleAxis(axis.c0 * axis.s0**j0, axis.s0, kept.size)
    fk = np.fft.fftfreq(n, dt)
    s = sub.values[:, None]
    filters = np.sqrt(s) * np.conj(kernels.wavelet_ft(spec, s * fk[None, :]))
    validity = _wavelet_energy_validity(spec, sub.values, n, dt)
    return _CwtPlan(sub, tuple(int(j) for j in dropped), filters, validity)


def cwt(ts: TimeSeries, spec, scale_axis: Optional[ScaleAxis] = None) -> CoefficientGrid:
    """Continuous wavelet transform on a geometric scale grid.

    Levels whose mapped frequency ``f0/s`` exceeds Nyquist are dropped; their
    indices are kept in ``dropped_levels`` of the result.
    """
    if not kernels.is_cwt(spec):
        raise SpecError(f"cwt needs a wavelet spec, got {spec.name}")
    axis = scale_axis or spec.scale_axis or default_scale_axis(spec, ts.n, ts.dt)
    plan = _cwt_plan(spec, axis, ts.n, ts.dt)
    x_ft = sfft.fft(ts.samples)
    values = sfft.ifft(plan.filters * x_ft[None, :], axis=1)
    return CoefficientGrid(
        plan.axis, ts.times, values, validity=plan.validity, dropped_levels=plan.dropped
    )


def transform(ts: TimeSeries, spec, freqs=None) -> CoefficientGrid:
    """Dispatch to the transform matching ``spec``."""
    if kernels.is_stft(spec):
        return stft(ts, spec, freqs)
    if kernels.is_st(spec):
        return s_transform(ts, spec, freqs)
    if kernels.is_cwt(spec):
        return cwt(ts, spec)
    raise SpecError(f"unknown spec {spec!r}")
