"""
Analysis windows and wavelets, their Fourier transforms, time-moment kernels
and the power normalization constants that turn squared coefficients into
EPSD estimates.

Window conventions
------------------
Box window          v(t) = 1/(2h) on |t| <= h
Gaussian window     v(t) = exp(-t^2 / (2 sigma^2)) / (sqrt(2 pi) sigma)
S-transform voice   Gaussian with time standard deviation kappa/|f|
                    (or K(f)/|f| for the generalized transform)

All windows have unit area, so their Fourier transform equals 1 at zero.
The moment kernel of order m is ``M_m(xi) = int s^m v(-s) exp(i 2 pi xi s) ds``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, fields
from typing import Optional, Union

import numpy as np
from scipy import integrate, special

from .core import ScaleAxis

TWO_PI = 2.0 * np.pi

#: Symmetric exclusion half-width around the zeta = 0 singularity of D_kappa.
#: The integrand behaves like exp(-(2 pi kappa)^2)/|zeta| there, which is not
#: integrable; this cut reproduces the published regression curve.
D_KAPPA_ZETA_CUT = 3e-3


class SpecError(ValueError):
    """Invalid transform specification or parameter combination."""


class RegressionRangeWarning(UserWarning):
    """The D_kappa regression was evaluated outside kappa > 0.1."""


# ---------------------------------------------------------------------------
# Generalized S-transform width functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PowerLawK:
    """``K(f) = kappa0 * (f_ref / f) ** p``."""

    kappa0: float
    f_ref: float = 1.0
    p: float = 0.0

    def __post_init__(self):
        if not self.kappa0 > 0 or not self.f_ref > 0:
            raise SpecError("power-law K(f) needs kappa0 > 0 and f_ref > 0")

    def __call__(self, f):
        f = np.abs(np.asarray(f, dtype=float))
        with np.errstate(divide="ignore"):
            return self.kappa0 * (self.f_ref / f) ** self.p

    def to_dict(self):
        return {"kind": "power-law", "kappa0": self.kappa0, "f_ref": self.f_ref, "p": self.p}


@dataclass(frozen=True)
class TabulatedK:
    """Monotone tabulated ``K(f)`` with linear interpolation (held flat outside)."""

    freqs: tuple
    values: tuple

    def __post_init__(self):
        f = np.asarray(self.freqs, dtype=float)
        k = np.asarray(self.values, dtype=float)
        if f.ndim != 1 or f.shape != k.shape or f.size < 2:
            raise SpecError("tabulated K(f) needs matching 1-D freqs/values with >= 2 points")
        if np.any(np.diff(f) <= 0):
            raise SpecError("tabulated K(f) frequencies must be strictly increasing")
        if np.any(k <= 0):
            raise SpecError("tabulated K(f) values must be positive")
        d = np.diff(k)
        if not (np.all(d <= 0) or np.all(d >= 0)):
            raise SpecError("tabulated K(f) must be monotone")
        object.__setattr__(self, "freqs", tuple(f.tolist()))
        object.__setattr__(self, "values", tuple(k.tolist()))

    def __call__(self, f):
        return np.interp(np.abs(np.asarray(f, dtype=float)), self.freqs, self.values)

    def to_dict(self):
        return {"kind": "table", "freqs": list(self.freqs), "values": list(self.values)}


KFunction = Union[PowerLawK, TabulatedK]


# ---------------------------------------------------------------------------
# Transform specifications
# ---------------------------------------------------------------------------


def _positive(name, value):
    value = float(value)
    if not np.isfinite(value) or value <= 0:
        raise SpecError(f"{name} must be positive, got {value}")
    return value


@dataclass(frozen=True)
class StftBox:
    h: float
    name = "stft-box"

    def __post_init__(self):
        object.__setattr__(self, "h", _positive("h", self.h))


@dataclass(frozen=True)
class StftGauss:
    sigma: float
    name = "stft-gauss"

    def __post_init__(self):
        object.__setattr__(self, "sigma", _positive("sigma", self.sigma))


@dataclass(frozen=True)
class STrans:
    kappa: float
    name = "s-transform"

    def __post_init__(self):
        object.__setattr__(self, "kappa", _positive("kappa", self.kappa))

    def width(self, f):
        """Window parameter at frequency ``f`` (constant here)."""
        return np.full(np.shape(f), self.kappa, dtype=float)


@dataclass(frozen=True)
class STransGeneralized:
    K: KFunction
    name = "s-transform"

    def width(self, f):
        k = np.asarray(self.K(f), dtype=float)
        if np.any(~np.isfinite(k)) or np.any(k <= 0):
            raise SpecError("K(f) must be finite and positive at every analysis frequency")
        return k


@dataclass(frozen=True)
class CwtHarmonic:
    m: float
    n: float
    scale_axis: Optional[ScaleAxis] = field(default=None, compare=False)
    name = "cwt-harmonic"

    def __post_init__(self):
        m = _positive("m", self.m)
        n = _positive("n", self.n)
        if not m < n:
            raise SpecError(f"harmonic wavelet parameters require m < n (got m={m}, n={n})")
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "n", n)


@dataclass(frozen=True)
class CwtMorse:
    beta: float
    gamma: float
    scale_axis: Optional[ScaleAxis] = field(default=None, compare=False)
    name = "cwt-morse"

    def __post_init__(self):
        object.__setattr__(self, "beta", _positive("beta", self.beta))
        object.__setattr__(self, "gamma", _positive("gamma", self.gamma))


TransformSpec = Union[StftBox, StftGauss, STrans, STransGeneralized, CwtHarmonic, CwtMorse]
STFT_SPECS = (StftBox, StftGauss)
ST_SPECS = (STrans, STransGeneralized)
CWT_SPECS = (CwtHarmonic, CwtMorse)


def is_stft(spec) -> bool:
    return isinstance(spec, STFT_SPECS)


def is_st(spec) -> bool:
    return isinstance(spec, ST_SPECS)


def is_cwt(spec) -> bool:
    return isinstance(spec, CWT_SPECS)


def with_scale_axis(spec, axis: ScaleAxis):
    """Copy of a CWT spec carrying ``axis``."""
    if not is_cwt(spec):
        raise SpecError(f"{spec.name} has no scale axis")
    kwargs = {f.name: getattr(spec, f.name) for f in fields(spec)}
    kwargs["scale_axis"] = axis
    return type(spec)(**kwargs)


def _st_sigma(spec, f):
    """Time standard deviation of the S-transform voice window at ``f``."""
    f = np.asarray(f, dtype=float)
    if np.any(f == 0):
        raise SpecError("S-transform window is degenerate at zero frequency (width kappa/|f|)")
    return spec.width(f) / np.abs(f)


def _require_f(spec, f):
    if f is None:
        raise SpecError(f"{spec.name} kernels need the analysis frequency f")
    return np.asarray(f, dtype=float)


# ---------------------------------------------------------------------------
# Window transforms and moment kernels
# ---------------------------------------------------------------------------


def _gauss_moment(sigma, m, xi):
    g = np.exp(-2.0 * np.pi**2 * sigma**2 * xi**2)
    if m == 0:
        return g.astype(complex)
    if m == 1:
        return 1j * TWO_PI * sigma**2 * xi * g
    return ((sigma**2 - 4.0 * np.pi**2 * sigma**4 * xi**2) * g).astype(complex)


def _box_moment(h, m, xi):
    # closed forms in x = 2 pi h xi, with series near x = 0
    x = TWO_PI * h * xi
    small = np.abs(x) < 1e-3
    xs = np.where(small, 1.0, x)
    if m == 0:
        val = np.where(small, 1.0 - x**2 / 6.0 + x**4 / 120.0, np.sin(xs) / xs)
        return val.astype(complex)
    if m == 1:
        # M_1 = -i/(2 pi) dM_0/dxi = -i h (cos x - sin x / x) / x
        g1 = np.where(small, -x / 3.0 + x**3 / 30.0, (np.cos(xs) - np.sin(xs) / xs) / xs)
        return -1j * h * g1
    # M_2 = -h^2 g''(x),  g(x) = sin x / x
    g2 = np.where(
        small,
        -1.0 / 3.0 + x**2 / 10.0 - x**4 / 168.0,
        -np.sin(xs) / xs - 2.0 * np.cos(xs) / xs**2 + 2.0 * np.sin(xs) / xs**3,
    )
    return (-(h**2) * g2).astype(complex)


def moment_kernel(spec, m: int, xi, f=None):
    """Time-moment kernel ``M_m(xi)`` of an STFT window or S-transform voice.

    ``m`` is limited to 0, 1 and 2. For the even windows used here ``M_0`` and
    ``M_2`` are real and even while ``M_1`` is imaginary and odd.
    """
    if m not in (0, 1, 2):
        raise SpecError(f"moment order {m} unsupported (only 0, 1, 2)")
    xi = np.asarray(xi, dtype=float)
    if isinstance(spec, StftBox):
        out = _box_moment(spec.h, m, xi)
    elif isinstance(spec, StftGauss):
        out = _gauss_moment(spec.sigma, m, xi)
    elif is_st(spec):
        f = _require_f(spec, f)
        out = _gauss_moment(_st_sigma(spec, f), m, xi)
    else:
        raise SpecError(f"{spec.name} is not a window transform")
    return out[()] if out.ndim == 0 else out


def window_ft(spec, xi, f=None):
    """Fourier transform of the window, ``M_0(xi)``."""
    return moment_kernel(spec, 0, xi, f)


def window_time(spec, t, f=None):
    """Window value ``v(t)`` (or the S-transform voice ``w(f, t)``)."""
    t = np.asarray(t, dtype=float)
    if isinstance(spec, StftBox):
        return np.where(np.abs(t) <= spec.h * (1 + 1e-12), 0.5 / spec.h, 0.0)
    if isinstance(spec, StftGauss):
        sigma = spec.sigma
    elif is_st(spec):
        sigma = _st_sigma(spec, _require_f(spec, f))
    else:
        raise SpecError(f"{spec.name} is not a window transform")
    return np.exp(-0.5 * (t / sigma) ** 2) / (np.sqrt(TWO_PI) * sigma)


# ---------------------------------------------------------------------------
# Wavelets
# ---------------------------------------------------------------------------


def morse_log_a(beta, gamma):
    """log of the GMW normalization ``a = 2 (e gamma / beta) ** (beta / gamma)``."""
    return math.log(2.0) + (beta / gamma) * (1.0 + math.log(gamma / beta))


def center_frequency(spec) -> float:
    """Frequency ``f0`` used in the scale mapping ``f = f0 / s``."""
    if isinstance(spec, CwtHarmonic):
        return 0.5 * (spec.n + spec.m)
    if isinstance(spec, CwtMorse):
        return (spec.beta / spec.gamma) ** (1.0 / spec.gamma) / TWO_PI
    raise SpecError(f"{spec.name} is not a wavelet transform")


def wavelet_ft(spec, f):
    """Fourier transform of the mother wavelet (real-valued for both families)."""
    f = np.asarray(f, dtype=float)
    if isinstance(spec, CwtHarmonic):
        out = np.where((f >= spec.m) & (f < spec.n), 1.0 / np.sqrt(spec.n - spec.m), 0.0)
    elif isinstance(spec, CwtMorse):
        pos = f > 0
        u = TWO_PI * np.where(pos, f, 1.0)
        logv = morse_log_a(spec.beta, spec.gamma) + spec.beta * np.log(u) - u**spec.gamma
        out = np.where(pos, np.exp(logv), 0.0)
    else:
        raise SpecError(f"{spec.name} is not a wavelet transform")
    return out[()] if out.ndim == 0 else out


def scale_to_freq(spec, s):
    s = np.asarray(s, dtype=float)
    if np.any(s <= 0):
        raise SpecError("scales must be positive")
    return center_frequency(spec) / s


def freq_to_scale(spec, f):
    f = np.asarray(f, dtype=float)
    if np.any(f <= 0):
        raise SpecError("frequencies must be positive for the scale mapping")
    return center_frequency(spec) / f


# ---------------------------------------------------------------------------
# Normalization constants
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KernelConstants:
    """Normalization constants of one transform.

    ``epsd_scale`` multiplies the transform-domain PSD (the energy-preserving
    density ``S_STFT,f``, ``S_Sf`` or ``S_wf``) to give the EPSD estimate,
    while ``coef_scale`` multiplies ``|coefficient|^2`` directly. Constants that
    do not apply to the transform are ``None``.
    """

    epsd_scale: float
    coef_scale: float
    cn2: Optional[float] = None
    cns0: Optional[float] = None
    d_kappa: Optional[float] = None
    c_psi: Optional[float] = None
    c1_psi: Optional[float] = None
    cnw2: Optional[float] = None
    f0: Optional[float] = None
    a_bg: Optional[float] = None

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self) if getattr(self, f.name) is not None}


def morse_constants(beta: float, gamma: float):
    """``(a, C_psi, C_1psi, C_nw^2)`` of a generalized Morse wavelet."""
    la = morse_log_a(beta, gamma)
    la2 = morse_log_a(2 * beta, gamma)
    c_psi = 2.0 * math.exp(la2 + special.gammaln(2 * beta / gamma)) / gamma
    c1_psi = math.exp(la + special.gammaln(beta / gamma)) / gamma
    cnw2 = (
        2.0 * math.exp(la2 + special.gammaln((2 * beta + 1) / gamma))
        / (TWO_PI * 2.0 ** (1.0 / gamma) * gamma)
    )
    return math.exp(la), c_psi, c1_psi, cnw2


def norm_constants(spec, f=None) -> KernelConstants:
    """Normalization constants for ``spec`` (``f`` is needed for S-transforms)."""
    if isinstance(spec, StftBox):
        cn2 = 1.0 / (2.0 * spec.h)
        return KernelConstants(epsd_scale=1.0, coef_scale=1.0 / cn2, cn2=cn2)
    if isinstance(spec, StftGauss):
        cn2 = 1.0 / (2.0 * spec.sigma * math.sqrt(math.pi))
        return KernelConstants(epsd_scale=1.0, coef_scale=1.0 / cn2, cn2=cn2)
    if is_st(spec):
        f = _require_f(spec, f)
        if np.ndim(f) != 0:
            raise SpecError("norm_constants takes a single frequency for S-transforms")
        if f == 0:
            raise SpecError("S-transform window is degenerate at zero frequency (width kappa/|f|)")
        kappa = float(spec.width(f))
        cns0 = 1.0 / (kappa * math.sqrt(4.0 * math.pi))
        dk = d_kappa(kappa)
        return KernelConstants(
            epsd_scale=dk / cns0,
            coef_scale=1.0 / (abs(float(f)) * cns0),
            cns0=cns0,
            d_kappa=dk,
        )
    if isinstance(spec, CwtHarmonic):
        c_psi = math.log(spec.n / spec.m) / (spec.n - spec.m)
        f0 = center_frequency(spec)
        return KernelConstants(
            epsd_scale=c_psi * f0, coef_scale=1.0, c_psi=c_psi, cnw2=1.0, f0=f0
        )
    if isinstance(spec, CwtMorse):
        a, c_psi, c1_psi, cnw2 = morse_constants(spec.beta, spec.gamma)
        f0 = center_frequency(spec)
        return KernelConstants(
            epsd_scale=c_psi * f0 / cnw2,
            coef_scale=1.0 / cnw2,
            c_psi=c_psi,
            c1_psi=c1_psi,
            cnw2=cnw2,
            f0=f0,
            a_bg=a,
        )
    raise SpecError(f"unknown transform spec {spec!r}")


def st_coef_scale(spec, freqs) -> np.ndarray:
    """Vectorized ``1 / (|f| C_nS0)`` for an S-transform frequency axis."""
    freqs = np.asarray(freqs, dtype=float)
    if np.any(freqs == 0):
        raise SpecError("S-transform window is degenerate at zero frequency (width kappa/|f|)")
    kappa = spec.width(freqs)
    return kappa * math.sqrt(4.0 * math.pi) / np.abs(freqs)


def d_kappa(kappa: float, method: str = "quadrature", zeta_cut: float = D_KAPPA_ZETA_CUT) -> float:
    """Energy normalization ``D_kappa`` of the S-transform.

    ``quadrature`` integrates ``exp(-(2 pi kappa (zeta - 1))**2) / |zeta|``
    over the real line, splitting at zero and excluding ``|zeta| < zeta_cut``
    (the integrand is logarithmically divergent there). ``regression`` returns
    ``(1 + 2.3 exp(-70 kappa**3.14)) / (kappa sqrt(4 pi))``.
    """
    kappa = float(kappa)
    if not np.isfinite(kappa) or kappa <= 0:
        raise SpecError(f"kappa must be positive, got {kappa}")
    cns0 = 1.0 / (kappa * math.sqrt(4.0 * math.pi))
    if method == "regression":
        if kappa <= 0.1:
            warnings.warn(
                f"D_kappa regression is calibrated for kappa > 0.1 (got {kappa})",
                RegressionRangeWarning,
                stacklevel=2,
            )
        return (1.0 + 2.3 * math.exp(-70.0 * kappa**3.14)) * cns0
    if method != "quadrature":
        raise SpecError(f"unknown D_kappa method {method!r}")

    a = TWO_PI * kappa

    def integrand(z):
        return math.exp(-((a * (z - 1.0)) ** 2)) / abs(z)

    width = 1.0 / a
    opts = dict(epsabs=0.0, epsrel=1e-10, limit=500)
    # the Gaussian bump sits at zeta = 1 with std 1/(a sqrt 2)
    lo, hi = max(zeta_cut, 1.0 - 12 * width), 1.0 + 12 * width
    total = integrate.quad(integrand, lo, 1.0, **opts)[0]
    total += integrate.quad(integrand, 1.0, hi, **opts)[0]
    if lo > zeta_cut:
        total += integrate.quad(integrand, zeta_cut, lo, **opts)[0]
    total += integrate.quad(integrand, hi, np.inf, **opts)[0]
    total += integrate.quad(integrand, -np.inf, -zeta_cut, **opts)[0]
    return total


# ---------------------------------------------------------------------------
# Convenience
# ---------------------------------------------------------------------------


def spec_to_dict(spec) -> dict:
    """JSON-ready description of a spec (inverse of ``cli.parse_spec``)."""
    if isinstance(spec, StftBox):
        return {"transform": spec.name, "h": spec.h}
    if isinstance(spec, StftGauss):
        return {"transform": spec.name, "sigma": spec.sigma}
    if isinstance(spec, STrans):
        return {"transform": spec.name, "kappa": spec.kappa}
    if isinstance(spec, STransGeneralized):
        return {"transform": spec.name, "K": spec.K.to_dict()}
    out = {"transform": spec.name}
    if isinstance(spec, CwtHarmonic):
        out.update(m=spec.m, n=spec.n)
    else:
        out.update(beta=spec.beta, gamma=spec.gamma)
    if spec.scale_axis is not None:
        out.update(c0=spec.scale_axis.c0, s0=spec.scale_axis.s0, levels=spec.scale_axis.levels)
    return out


def label(spec) -> str:
    """Short identifier used for file names and summaries."""
    if isinstance(spec, StftBox):
        return f"stft-box_h{spec.h:g}"
    if isinstance(spec, StftGauss):
        return f"stft-gauss_sigma{spec.sigma:g}"
    if isinstance(spec, STrans):
        return f"st_kappa{spec.kappa:g}"
    if isinstance(spec, STransGeneralized):
        return "st_generalized"
    if isinstance(spec, CwtHarmonic):
        return f"cwt-hw_m{spec.m:g}_n{spec.n:.4g}"
    return f"cwt-gmw_b{spec.beta:g}_g{spec.gamma:g}"

