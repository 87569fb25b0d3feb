"""
Value types shared by every module: sampled signals, analysis axes and the
two grid containers (complex transform coefficients and real power values).

All containers are frozen dataclasses holding read-only numpy arrays, so they
can be handed to worker processes without defensive copies.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple, Union

import numpy as np


def _frozen(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TimeSeries:
    """Uniformly sampled real signal.

    Parameters
    ----------
    samples : array_like
        Signal values in process units.
    dt : float
        Sampling interval in seconds.
    t0 : float
        Time of the first sample in seconds.
    """

    samples: np.ndarray
    dt: float
    t0: float = 0.0

    def __post_init__(self):
        samples = _frozen(self.samples)
        if samples.ndim != 1 or samples.size < 2:
            raise ValueError("a time series needs at least 2 samples in a 1-D array")
        if not np.all(np.isfinite(samples)):
            bad = int(np.flatnonzero(~np.isfinite(samples))[0])
            raise ValueError(f"non-finite sample at index {bad}")
        dt = float(self.dt)
        if not np.isfinite(dt) or dt <= 0:
            raise ValueError(f"dt must be finite and positive, got {self.dt!r}")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "dt", dt)
        object.__setattr__(self, "t0", float(self.t0))

    @property
    def n(self) -> int:
        return self.samples.size

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n)

    @property
    def duration(self) -> float:
        """Record length ``n * dt`` (the span covered by the samples)."""
        return self.n * self.dt

    @property
    def nyquist(self) -> float:
        return 0.5 / self.dt

    def scaled(self, factor: float) -> "TimeSeries":
        return TimeSeries(self.samples * factor, self.dt, self.t0)


@dataclass(frozen=True)
class FrequencyAxis:
    """Strictly increasing, nonnegative frequencies in Hz."""

    values: np.ndarray

    def __post_init__(self):
        values = _frozen(self.values)
        if values.ndim != 1 or values.size == 0:
            raise ValueError("frequency axis must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(values)):
            raise ValueError("frequency axis contains non-finite values")
        if np.any(values < 0):
            raise ValueError("frequency axis values must be >= 0")
        if values.size > 1 and np.any(np.diff(values) <= 0):
            raise ValueError("frequency axis must be strictly increasing")
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.size

    @classmethod
    def dft_bins(cls, n: int, dt: float, include_zero: bool = False) -> "FrequencyAxis":
        """Positive DFT bin frequencies ``k / (n dt)`` up to and including Nyquist."""
        k = np.arange(0 if include_zero else 1, n // 2 + 1)
        return cls(k / (n * dt))


@dataclass(frozen=True)
class ScaleAxis:
    """Geometric wavelet scales ``c0 * s0**j`` for ``j = 0 .. levels-1``."""

    c0: float
    s0: float
    levels: int
    values: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.c0 > 0:
            raise ValueError(f"c0 must be positive, got {self.c0}")
        if not self.s0 > 1:
            raise ValueError(f"s0 must exceed 1, got {self.s0}")
        if int(self.levels) < 1:
            raise ValueError("a scale axis needs at least one level")
        object.__setattr__(self, "levels", int(self.levels))
        object.__setattr__(
            self, "values", _frozen(self.c0 * float(self.s0) ** np.arange(self.levels))
        )

    def __len__(self) -> int:
        return self.levels

    @property
    def exponents(self) -> np.ndarray:
        return np.arange(self.levels)


Axis = Union[FrequencyAxis, ScaleAxis]


def _axis_kind(axis: Axis) -> str:
    return "scale" if isinstance(axis, ScaleAxis) else "frequency"


def _check_times(times) -> np.ndarray:
    times = _frozen(times)
    if times.ndim != 1 or times.size == 0:
        raise ValueError("time axis must be a non-empty 1-D sequence")
    if times.size > 1 and np.any(np.diff(times) <= 0):
        raise ValueError("time axis must be strictly increasing")
    return times


@dataclass(frozen=True)
class CoefficientGrid:
    """Complex transform coefficients laid out as (axis value) x (time).

    ``validity`` holds, per cell, the fraction of the analysis kernel that fell
    inside the record (1 in the interior, smaller near the edges).
    """

    axis: Axis
    times: np.ndarray
    values: np.ndarray
    validity: Optional[np.ndarray] = None
    dropped_levels: Tuple[int, ...] = ()

    def __post_init__(self):
        times = _check_times(self.times)
        values = _frozen(self.values, dtype=complex)
        shape = (len(self.axis), times.size)
        if values.shape != shape:
            raise ValueError(f"coefficient matrix has shape {values.shape}, axes imply {shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("coefficient matrix contains non-finite entries")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        if self.validity is not None:
            validity = _frozen(np.broadcast_to(self.validity, shape))
            object.__setattr__(self, "validity", validity)
        object.__setattr__(self, "dropped_levels", tuple(int(j) for j in self.dropped_levels))

    @property
    def axis_kind(self) -> str:
        return _axis_kind(self.axis)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True)
class SpectralGrid:
    """Real power values over (frequency) x (time), units (process units)^2/Hz.

    ``signed`` marks residual grids, which may be negative; every other grid is
    a power density and must be nonnegative.
    """

    freqs: FrequencyAxis
    times: np.ndarray
    values: np.ndarray
    signed: bool = False
    validity: Optional[np.ndarray] = None

    def __post_init__(self):
        if not isinstance(self.freqs, FrequencyAxis):
            object.__setattr__(self, "freqs", FrequencyAxis(self.freqs))
        times = _check_times(self.times)
        values = _frozen(self.values)
        shape = (len(self.freqs), times.size)
        if values.shape != shape:
            raise ValueError(f"value matrix has shape {values.shape}, axes imply {shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("spectral grid contains non-finite entries")
        if not self.signed and np.any(values < 0):
            raise ValueError("a PSD grid must be nonnegative (use signed=True for residuals)")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        if self.validity is not None:
            object.__setattr__(self, "validity", _frozen(np.broadcast_to(self.validity, shape)))

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape

    def same_axes(self, other: "SpectralGrid") -> bool:
        return (
            self.shape == other.shape
            and np.array_equal(self.freqs.values, other.freqs.values)
            and np.array_equal(self.times, other.times)
        )

    def with_values(self, values, signed: Optional[bool] = None) -> "SpectralGrid":
        return SpectralGrid(
            self.freqs,
            self.times,
            values,
            signed=self.signed if signed is None else signed,
            validity=self.validity,
        )


def fourier_transform(ts: TimeSeries) -> Tuple[np.ndarray, np.ndarray]:
    """Unnormalized DFT of a series.

    Returns the bins ``X_k = sum_q x_q exp(-i 2 pi k q / N)`` in standard FFT
    order together with their signed frequencies (resolution ``1/(N dt)``).
    """
    if not isinstance(ts, TimeSeries):
        ts = TimeSeries(np.asarray(ts, dtype=float), 1.0)
    bins = np.fft.fft(ts.samples)
    return bins, np.fft.fftfreq(ts.n, ts.dt)


def inverse_fourier_transform(bins, dt: float = 1.0, t0: float = 0.0) -> TimeSeries:
    """Inverse of :func:`fourier_transform`; the imaginary residue is dropped."""
    x = np.fft.ifft(np.asarray(bins, dtype=complex))
    return TimeSeries(x.real, dt, t0)
