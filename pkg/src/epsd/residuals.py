"""
Taylor coefficients of the modulation function and the residual terms that
measure how far the slow-variation approximation is from the true EPSD.

For a real modulation ``A = sqrt(S_E)`` expanded about ``(f, t)`` with
coefficients ``C[l, m] = d^{l+m} A / (df^l dt^m) / (l! m!)``:

* STFT and S-transform: the first-order term vanishes and

      R(;2) = (C10^2 + 2 C20 C00) r(2,2,0,0) + C01^2 r(0,0,2,0) + 2 C02 C00 r(0,1,0,1)

  with ``r(k,l,m,n) = (1/C_n^2) int xi^k M0^l |M1|^m M2^n dxi``.
* CWT:

      R_w(;1) = 2 C00 C01 r_w(0,1) + 2 C00 C10 r_w(1,0)
      R_w(;2) = (C10^2 + 2 C00 C20) r_w(2,0) + (2 C10 C01 + 2 C00 C11) r_w(1,1)
                + (C01^2 + 2 C00 C02) r_w(0,2)

  with ``r_w(j,k) = (s^k / C_nw^2) int (eta - f)^j s |psi_hat(s eta)|^2 deta``
  and ``s = f0 / f``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, Optional, Tuple

import numpy as np
from scipy import integrate

from . import kernels
from .core import FrequencyAxis, SpectralGrid
from .kernels import SpecError
from .simulator import EpsdModel

WINDOW_TUPLES = ((2, 2, 0, 0), (0, 0, 2, 0), (0, 1, 0, 1))
CWT_TUPLES = ((1, 0), (0, 1), (2, 0), (1, 1), (0, 2))
KEYS = ((0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2))
IMAG_TOL = 1e-8

_QUAD = dict(epsabs=0.0, epsrel=1e-10, limit=400)
_QUAD_WAVELET = dict(epsabs=1e-13, epsrel=1e-9, limit=400)


class RatioDefect(ArithmeticError):
    """A ratio that should be real came out with a non-negligible imaginary part."""


# ---------------------------------------------------------------------------
# Taylor coefficients
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TaylorCoeffs:
    """Coefficients ``C[(l, m)]`` of A about ``(f, t)``; arrays when evaluated on a grid."""

    f: np.ndarray
    t: np.ndarray
    c: Dict[Tuple[int, int], np.ndarray]

    def __getitem__(self, key):
        return self.c[key]


def _from_partials(d) -> Dict[Tuple[int, int], np.ndarray]:
    return {
        (0, 0): d["A"],
        (1, 0): d["A_f"],
        (0, 1): d["A_t"],
        (2, 0): d["A_ff"] / 2.0,
        (1, 1): d["A_ft"],
        (0, 2): d["A_tt"] / 2.0,
    }


def _fd_partials(model: EpsdModel, f, t):
    df = np.maximum(1e-3 * np.abs(f), 1e-4)
    dt = np.maximum(1e-3 * np.abs(t), 1e-4)
    offsets = (-1, 0, 1)
    s = {(i, j): model(f + i * df, t + j * dt) for i in offsets for j in offsets}
    bad = [v <= 0 for v in s.values()]
    if np.any(np.logical_or.reduce(bad)):
        raise ValueError(
            "S_E must be positive at every finite-difference stencil point "
            "(sqrt(S_E) is not differentiable where it vanishes)"
        )
    a = {k: np.sqrt(v) for k, v in s.items()}
    return {
        "A": a[0, 0],
        "A_f": (a[1, 0] - a[-1, 0]) / (2 * df),
        "A_t": (a[0, 1] - a[0, -1]) / (2 * dt),
        "A_ff": (a[1, 0] - 2 * a[0, 0] + a[-1, 0]) / df**2,
        "A_tt": (a[0, 1] - 2 * a[0, 0] + a[0, -1]) / dt**2,
        "A_ft": (a[1, 1] - a[1, -1] - a[-1, 1] + a[-1, -1]) / (4 * df * dt),
    }


def taylor_coeffs(model: EpsdModel, f, t, method: str = "auto") -> TaylorCoeffs:
    """Taylor coefficients of ``A = sqrt(S_E)`` at ``(f, t)`` (broadcast).

    ``method="auto"`` uses the model's analytic derivatives when it has them and
    central differences otherwise; ``"fd"`` forces differences.
    """
    f, t = np.broadcast_arrays(np.asarray(f, dtype=float), np.asarray(t, dtype=float))
    if method not in ("auto", "fd", "analytic"):
        raise ValueError(f"unknown method {method!r}")
    if method == "analytic" and model.derivatives is None:
        raise ValueError(f"model {model.name!r} has no analytic derivatives")
    if method != "fd" and model.derivatives is not None:
        if np.any(model(f, t) <= 0):
            raise ValueError("S_E must be positive where Taylor coefficients are taken")
        d = model.derivatives(f, t)
    else:
        d = _fd_partials(model, f, t)
    c = {k: np.asarray(np.broadcast_to(v, f.shape), dtype=float) for k, v in _from_partials(d).items()}
    for v in c.values():
        if not np.all(np.isfinite(v)):
            raise ValueError("non-finite Taylor coefficient")
    return TaylorCoeffs(f, t, c)


# ---------------------------------------------------------------------------
# Window ratios (STFT and S-transform)
# ---------------------------------------------------------------------------


def _check_tuple(tup):
    tup = tuple(int(v) for v in tup)
    if tup not in WINDOW_TUPLES:
        raise SpecError(f"ratio tuple {tup} not supported; use one of {WINDOW_TUPLES}")
    return tup


def _integrand(spec, tup, f=None):
    k, l, m, n = tup

    def fn(xi):
        val = xi**k * kernels.moment_kernel(spec, 0, xi, f) ** l
        if m:
            val = val * np.abs(kernels.moment_kernel(spec, 1, xi, f)) ** m
        if n:
            val = val * kernels.moment_kernel(spec, 2, xi, f) ** n
        return val

    return fn


def _check_real(value: complex, what: str) -> float:
    if abs(value.imag) > IMAG_TOL * abs(value.real):
        raise RatioDefect(f"{what}: imaginary part {value.imag:.3e} vs real part {value.real:.3e}")
    return value.real


def _gauss_ratio(spec, tup, f, sigma) -> float:
    fn = _integrand(spec, tup, f)
    scale = 1.0 / sigma  # integrand width in xi
    parts = []
    for part in (np.real, np.imag):
        val = 0.0
        for a, b in ((-np.inf, -scale), (-scale, 0.0), (0.0, scale), (scale, np.inf)):
            val += integrate.quad(lambda x: float(part(fn(x))), a, b, **_QUAD)[0]
        parts.append(val)
    cn2 = 1.0 / (2.0 * sigma * math.sqrt(math.pi))
    return _check_real(complex(*parts) / cn2, f"ratio {tup}")


# Gauss-Legendre panels over half-periods of the box kernels (x = 2 pi h xi)
_GL_X, _GL_W = np.polynomial.legendre.leggauss(24)
_BOX_PANELS = 4000


def _box_ratio(spec: kernels.StftBox, tup, band: Optional[float]) -> float:
    h = spec.h
    fn = _integrand(spec, tup)
    if tup == (2, 2, 0, 0):
        if band is None:
            raise SpecError(
                "box-window r(2,2,0,0) diverges: xi^2 M0^2 does not decay, so a finite "
                "integration band F (e.g. the Nyquist frequency) is required"
            )
        band = float(band)
        if not band > 0:
            raise SpecError("band must be positive")
        edges = np.arange(0.0, band * 2 * h, 0.5) / (2 * h)  # half-periods in xi
        edges = np.append(edges, band)
        tail = 0.0
    else:
        edges = np.arange(_BOX_PANELS + 1) * 0.5 / (2 * h)
        # integrand ~ h^2 / (2 x^2) on average beyond the last panel
        tail = h / (4 * np.pi * (np.pi * _BOX_PANELS / 2))
    a, b = edges[:-1, None], edges[1:, None]
    xi = 0.5 * (b - a) * _GL_X[None, :] + 0.5 * (a + b)
    vals = fn(xi)
    half = np.sum(0.5 * (b - a)[:, 0] * (vals @ _GL_W))
    total = 2.0 * (complex(half) + tail)  # integrands are even
    return _check_real(total * 2.0 * h, f"ratio {tup}")


def ratio_stft(spec, k, l, m, n, band: Optional[float] = None) -> float:
    """``r(k,l,m,n)`` of an STFT window by quadrature.

    The box window needs ``band`` for ``(2,2,0,0)``: the integral is taken over
    ``[-band, band]``.
    """
    if not kernels.is_stft(spec):
        raise SpecError(f"ratio_stft needs an STFT spec, got {spec.name}")
    tup = _check_tuple((k, l, m, n))
    if isinstance(spec, kernels.StftBox):
        return _box_ratio(spec, tup, band)
    return _gauss_ratio(spec, tup, None, spec.sigma)


@lru_cache(maxsize=4096)
def _st_ratio_cached(spec, f, tup):
    return _gauss_ratio(spec, tup, f, float(kernels._st_sigma(spec, f)))


def ratio_st(spec, f, k, l, m, n) -> float:
    """``r_S(k,l,m,n)`` for the S-transform voice at frequency ``f``."""
    if not kernels.is_st(spec):
        raise SpecError(f"ratio_st needs an S-transform spec, got {spec.name}")
    f = float(f)
    if not f > 0:
        raise SpecError("S-transform ratios need f > 0 (the voice window is degenerate at 0 Hz)")
    return _st_ratio_cached(spec, f, _check_tuple((k, l, m, n)))


def ratio_closed_form(spec, tup, f=None, band=None) -> float:
    """Analytic values of the window ratios (used as oracles and for speed)."""
    tup = _check_tuple(tup)
    if isinstance(spec, kernels.StftBox):
        h = spec.h
        if tup == (2, 2, 0, 0):
            if band is None:
                raise SpecError("box-window r(2,2,0,0) needs a band")
            return 2 * h / (4 * np.pi**2 * h**2) * (band - np.sin(4 * np.pi * h * band) / (4 * np.pi * h))
        return h**2 / 3.0
    sigma = spec.sigma if isinstance(spec, kernels.StftGauss) else float(kernels._st_sigma(spec, f))
    if tup == (2, 2, 0, 0):
        return 1.0 / (8 * np.pi**2 * sigma**2)
    return sigma**2 / 2.0


# ---------------------------------------------------------------------------
# Wavelet ratios
# ---------------------------------------------------------------------------


def _wavelet_band(spec) -> Tuple[float, float]:
    """Interval in mother-wavelet frequency holding essentially all of |psi_hat|^2."""
    if isinstance(spec, kernels.CwtHarmonic):
        return float(spec.m), float(spec.n)
    beta, gamma = spec.beta, spec.gamma
    peak = (beta / gamma) ** (1.0 / gamma)  # in u = 2 pi f
    # |psi_hat|^2 ~ u^{2 beta} exp(-2 u^gamma); width of log u about 1/sqrt(2 beta gamma)
    w = 12.0 / math.sqrt(2.0 * beta * gamma)
    return peak * math.exp(-w) / (2 * np.pi), peak * math.exp(w) / (2 * np.pi)


def _psi2(spec, u):
    return kernels.wavelet_ft(spec, u) ** 2


@lru_cache(maxsize=64)
def wavelet_moments(spec) -> Tuple[float, float, float]:
    """Central moments ``mu_j = int (u - f0)^j |psi_hat(u)|^2 du / C_nw^2`` for j = 0, 1, 2."""
    const = kernels.norm_constants(spec)
    f0 = const.f0
    lo, hi = _wavelet_band(spec)
    out = []
    for j in range(3):
        pts = [f0] if lo < f0 < hi else None
        val = integrate.quad(
            lambda u: (u - f0) ** j * _psi2(spec, u), lo, hi, points=pts, **_QUAD_WAVELET
        )[0]
        out.append(val / const.cnw2)
    if isinstance(spec, kernels.CwtHarmonic):
        out[1] = 0.0  # flat band centred on f0: exactly zero
    return tuple(out)


def ratio_cwt(spec, f, j, k) -> float:
    """``r_w(j,k)`` by direct quadrature over ``eta`` with ``s = f0/f``."""
    if not kernels.is_cwt(spec):
        raise SpecError(f"ratio_cwt needs a wavelet spec, got {spec.name}")
    if (int(j), int(k)) not in CWT_TUPLES:
        raise SpecError(f"(j,k)=({j},{k}) not supported; use one of {CWT_TUPLES}")
    f = float(f)
    if not f > 0:
        raise SpecError("wavelet ratios need f > 0")
    const = kernels.norm_constants(spec)
    s = const.f0 / f
    if isinstance(spec, kernels.CwtHarmonic) and j == 1:
        return 0.0
    lo, hi = _wavelet_band(spec)
    pts = [f] if lo / s < f < hi / s else None
    val = integrate.quad(
        lambda eta: (eta - f) ** j * s * _psi2(spec, s * eta), lo / s, hi / s, points=pts, **_QUAD_WAVELET
    )[0]
    return s**k * val / const.cnw2


def ratio_cwt_fast(spec, f, j, k):
    """Vectorized ``r_w(j,k) = s^(k-j) mu_j`` (same integral, rescaled)."""
    mu = wavelet_moments(spec)
    s = kernels.freq_to_scale(spec, f)
    return s ** (k - j) * mu[j]


# ---------------------------------------------------------------------------
# Residual grids
# ---------------------------------------------------------------------------


def _window_ratio_rows(spec, freqs, band):
    """Per-frequency ratios for the three window tuples."""
    if kernels.is_stft(spec):
        vals = [ratio_stft(spec, *tup, band=band) for tup in WINDOW_TUPLES]
        return [np.full(freqs.shape, v) for v in vals]
    # a Gaussian voice of std sigma = K(f)/f is the unit window rescaled, so
    # r(2,2,0,0) goes as sigma^-2 and the two time ratios as sigma^2
    sigma = kernels._st_sigma(spec, freqs)
    unit = kernels.StftGauss(1.0)
    powers = (-2, 2, 2)
    return [ratio_stft(unit, *tup) * sigma**p for tup, p in zip(WINDOW_TUPLES, powers)]


def residual_values(spec, coeffs: TaylorCoeffs, order: int, band: Optional[float] = None) -> np.ndarray:
    """Residual of the given order from precomputed coefficients on a (freq x time) grid."""
    if order not in (1, 2):
        raise ValueError("residual order must be 1 or 2")
    c = coeffs.c
    freqs = coeffs.f[:, 0]
    if kernels.is_cwt(spec):
        r = {jk: ratio_cwt_fast(spec, freqs, *jk)[:, None] for jk in CWT_TUPLES}
        if order == 1:
            return 2 * c[0, 0] * c[0, 1] * r[0, 1] + 2 * c[0, 0] * c[1, 0] * r[1, 0]
        return (
            (c[1, 0] ** 2 + 2 * c[0, 0] * c[2, 0]) * r[2, 0]
            + (2 * c[1, 0] * c[0, 1] + 2 * c[0, 0] * c[1, 1]) * r[1, 1]
            + (c[0, 1] ** 2 + 2 * c[0, 0] * c[0, 2]) * r[0, 2]
        )
    if order == 1:
        return np.zeros(coeffs.f.shape)
    r22, r02, r11 = (v[:, None] for v in _window_ratio_rows(spec, freqs, band))
    return (
        (c[1, 0] ** 2 + 2 * c[2, 0] * c[0, 0]) * r22
        + c[0, 1] ** 2 * r02
        + 2 * c[0, 2] * c[0, 0] * r11
    )


def residual_grid(
    model: EpsdModel, spec, freqs, times, order: int, band: Optional[float] = None, method: str = "auto"
) -> SpectralGrid:
    """Signed residual ``R(f, t; order)`` on ``freqs x times``.

    First-order grids for the STFT and S-transform are exactly zero. For a box
    window the second-order residual needs ``band`` (see :func:`ratio_stft`).
    """
    axis = freqs if isinstance(freqs, FrequencyAxis) else FrequencyAxis(freqs)
    times = np.asarray(times, dtype=float)
    if order not in (1, 2):
        raise ValueError("residual order must be 1 or 2")
    if not (kernels.is_stft(spec) or kernels.is_st(spec) or kernels.is_cwt(spec)):
        raise SpecError(f"unknown spec {spec!r}")
    if isinstance(spec, kernels.StftBox) and order == 2 and band is None:
        raise SpecError(
            "box-window second-order residual needs a finite band: r(2,2,0,0) diverges otherwise"
        )
    if order == 1 and not kernels.is_cwt(spec):
        return SpectralGrid(axis, times, np.zeros((len(axis), times.size)), signed=True)
    f = axis.values[:, None]
    t = times[None, :]
    coeffs = taylor_coeffs(model, f, t, method=method)
    return SpectralGrid(axis, times, residual_values(spec, coeffs, order, band), signed=True)


def significance_mask(model: EpsdModel, freqs, times, level: float = 0.01) -> np.ndarray:
    """Cells where the model exceeds ``level`` times its peak on the grid."""
    s = model.grid(np.asarray(freqs, dtype=float), np.asarray(times, dtype=float))
    return s > level * s.max()


def aggregate_abs(grid: SpectralGrid, model: EpsdModel, mask: Optional[np.ndarray] = None) -> float:
    """Mean ``|R|`` over cells with ``S_E > 1%`` of its peak (and ``mask`` if given)."""
    keep = significance_mask(model, grid.freqs.values, grid.times)
    if mask is not None:
        keep &= np.asarray(mask, dtype=bool)
    if not keep.any():
        raise ValueError("no grid cell passes the significance mask")
    return float(np.mean(np.abs(grid.values[keep])))
