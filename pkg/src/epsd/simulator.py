"""
Target EPSD models and spectral-representation simulation of evolutionary
Gaussian records.

Models are two-sided: ``S_E(f, t) = S_E(-f, t)`` and the process variance at
time ``t`` is the integral of ``S_E`` over the whole frequency line.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np

from .core import TimeSeries

Derivatives = Callable[[np.ndarray, np.ndarray], Dict[str, np.ndarray]]


@dataclass(frozen=True)
class EpsdModel:
    """Evaluable EPSD surface.

    ``func(f, t)`` is called with ``f >= 0`` only; negative frequencies are
    mirrored. ``derivatives(f, t)``, when given, returns the partials of
    ``A = sqrt(S_E)`` under keys ``A, A_f, A_t, A_ff, A_ft, A_tt``.
    """

    func: Callable[[np.ndarray, np.ndarray], np.ndarray]
    duration: float
    derivatives: Optional[Derivatives] = None
    name: str = "custom"
    params: dict = field(default_factory=dict, compare=False)

    def __call__(self, f, t):
        f = np.abs(np.asarray(f, dtype=float))
        t = np.asarray(t, dtype=float)
        return np.asarray(self.func(*np.broadcast_arrays(f, t)), dtype=float)

    def grid(self, freqs, times) -> np.ndarray:
        """Model values on the outer product ``freqs x times``."""
        f = np.asarray(freqs, dtype=float)[:, None]
        t = np.asarray(times, dtype=float)[None, :]
        return self(f, t)


# ---------------------------------------------------------------------------
# Seismic ground-motion model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SeismicModelParams:
    """Lognormal-in-frequency EPSD with a lognormal-shaped intensity envelope.

    Defaults describe a M7 event at 50 km on a shallow alluvial site.
    """

    E_T: float = 1478.0  # cm^2/s^3
    T: float = 21.5  # s
    eta: float = 0.71
    fc_a: float = 1.942  # ln Fc(t) = fc_a - fc_b ln t
    fc_b: float = 0.35
    lam_scale: float = 0.42  # lambda0(t) = exp(-(ln t - lam_mu)^2/lam_w) / (lam_scale t sqrt(lam_pi pi))
    lam_pi: float = 1.42
    lam_mu: float = 2.15
    lam_w: float = 0.18

    def __post_init__(self):
        for name in ("E_T", "T", "eta"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    def lambda0(self, t):
        t = np.asarray(t, dtype=float)
        pos = t > 0
        tt = np.where(pos, t, 1.0)
        lt = np.log(tt)
        val = np.exp(-((lt - self.lam_mu) ** 2) / self.lam_w) / (
            self.lam_scale * tt * math.sqrt(self.lam_pi * math.pi)
        )
        return np.where(pos, val, 0.0)

    def center_frequency(self, t):
        return np.exp(self.fc_a - self.fc_b * np.log(t))

    def lambda0_mode(self) -> float:
        return math.exp(self.lam_mu - self.lam_w / 2.0)


def _seismic_log_parts(p: SeismicModelParams, f, t):
    lf, lt = np.log(f), np.log(t)
    u = (lf - p.fc_a + p.fc_b * lt + 0.5 * p.eta**2) / p.eta
    log_s = (
        math.log(0.5 * p.E_T / (math.sqrt(2 * math.pi) * p.eta * p.lam_scale * math.sqrt(p.lam_pi * math.pi)))
        - lf
        - lt
        - (lt - p.lam_mu) ** 2 / p.lam_w
        - 0.5 * u**2
    )
    return lf, lt, u, log_s


def _seismic_value(p: SeismicModelParams):
    def func(f, t):
        ok = (f > 0) & (t > 0)
        ff = np.where(ok, f, 1.0)
        tt = np.where(ok, t, 1.0)
        *_, log_s = _seismic_log_parts(p, ff, tt)
        return np.where(ok, np.exp(log_s), 0.0)

    return func


def _seismic_derivatives(p: SeismicModelParams):
    def derivs(f, t):
        f = np.asarray(f, dtype=float)
        t = np.asarray(t, dtype=float)
        if np.any(f <= 0) or np.any(t <= 0):
            raise ValueError("analytic derivatives need f > 0 and t > 0")
        _, lt, u, log_s = _seismic_log_parts(p, f, t)
        eta, b, w = p.eta, p.fc_b, p.lam_w
        # derivatives of ln S_E
        s_f = -1.0 / f - u / (eta * f)
        s_ff = 1.0 / f**2 - 1.0 / (eta**2 * f**2) + u / (eta * f**2)
        s_t = -1.0 / t - 2.0 * (lt - p.lam_mu) / (w * t) - u * b / (eta * t)
        s_tt = (
            1.0 / t**2
            - (2.0 / w) * (1.0 - (lt - p.lam_mu)) / t**2
            - b**2 / (eta**2 * t**2)
            + u * b / (eta * t**2)
        )
        s_ft = -b / (eta**2 * f * t)
        # ln A = ln S_E / 2
        a = np.exp(0.5 * log_s)
        lf_, lt_, lff, ltt, lft = s_f / 2, s_t / 2, s_ff / 2, s_tt / 2, s_ft / 2
        return {
            "A": a,
            "A_f": a * lf_,
            "A_t": a * lt_,
            "A_ff": a * (lff + lf_**2),
            "A_tt": a * (ltt + lt_**2),
            "A_ft": a * (lft + lf_ * lt_),
        }

    return derivs


def seismic_model(params: Optional[SeismicModelParams] = None) -> EpsdModel:
    """Two-sided seismic EPSD; zero for ``t <= 0`` and at ``f = 0``."""
    p = params or SeismicModelParams()
    return EpsdModel(
        _seismic_value(p),
        p.T,
        derivatives=_seismic_derivatives(p),
        name="seismic",
        params={k: getattr(p, k) for k in p.__dataclass_fields__},
    )


# ---------------------------------------------------------------------------
# Simple models
# ---------------------------------------------------------------------------


def constant_model(value: float, duration: float) -> EpsdModel:
    """``S_E = value`` everywhere."""
    if value < 0:
        raise ValueError("EPSD value must be nonnegative")

    def derivs(f, t):
        z = np.zeros(np.broadcast(f, t).shape)
        return {"A": z + math.sqrt(value), "A_f": z, "A_t": z, "A_ff": z, "A_ft": z, "A_tt": z}

    return EpsdModel(
        lambda f, t: np.full(np.broadcast(f, t).shape, float(value)),
        duration,
        derivatives=derivs,
        name="constant",
        params={"value": value},
    )


def flat_model(s0: float, band: float, duration: float) -> EpsdModel:
    """Stationary band-limited white noise: ``S0`` on ``|f| <= band``."""
    if s0 < 0 or band <= 0:
        raise ValueError("flat model needs s0 >= 0 and band > 0")
    return EpsdModel(
        lambda f, t: np.where(f <= band, float(s0), 0.0) + 0.0 * t,
        duration,
        name="flat",
        params={"s0": s0, "band": band},
    )


def modulated_flat_model(s0: float, band: float, duration: float) -> EpsdModel:
    """Uniformly modulated flat process with amplitude ``t / duration``."""
    return EpsdModel(
        lambda f, t: np.where(f <= band, float(s0), 0.0) * (np.clip(t, 0, None) / duration) ** 2,
        duration,
        name="modulated-flat",
        params={"s0": s0, "band": band},
    )


# ---------------------------------------------------------------------------
# Spectral representation method
# ---------------------------------------------------------------------------


@dataclass
class SrmPlan:
    """Harmonic amplitudes shared by every record of one simulation."""

    dt: float
    freqs: np.ndarray  # harmonic frequencies (k + 1/2) df
    cos_part: np.ndarray  # amp * cos(2 pi f_k t_q), (harmonics, samples)
    sin_part: np.ndarray

    @property
    def n(self) -> int:
        return self.cos_part.shape[1]


def srm_plan(model: EpsdModel, dt: float) -> SrmPlan:
    if not dt > 0:
        raise ValueError("dt must be positive")
    T = model.duration
    n = int(round(T / dt))
    if n < 2 or abs(n * dt - T) > dt:
        raise ValueError(f"duration {T} s is not a whole number of {dt} s steps")
    df = 1.0 / T
    nyq = 0.5 / dt
    k = np.arange(int(np.floor(nyq / df - 0.5)) + 1)
    freqs = (k + 0.5) * df
    freqs = freqs[freqs <= nyq]
    t = dt * np.arange(n)
    s = model.grid(freqs, t)
    if np.any(s < 0) or not np.all(np.isfinite(s)):
        raise ValueError("EPSD model returned negative or non-finite values")
    amp = np.sqrt(4.0 * s * df)
    theta = 2.0 * np.pi * np.outer(freqs, t)
    return SrmPlan(dt, freqs, amp * np.cos(theta), amp * np.sin(theta))


def record_phases(seed: int, index: int, count: int) -> np.ndarray:
    """Uniform phases on [0, 2 pi) from a counter-based stream keyed by (seed, record)."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(index),))
    rng = np.random.Generator(np.random.Philox(ss))
    return 2.0 * np.pi * rng.random(count)


def srm_record(plan: SrmPlan, seed: int, index: int) -> np.ndarray:
    """Samples of record ``index``; identical regardless of call order."""
    phi = record_phases(seed, index, plan.freqs.size)
    return np.einsum("k,kq->q", np.cos(phi), plan.cos_part) - np.einsum(
        "k,kq->q", np.sin(phi), plan.sin_part
    )


def _record_block(args):
    plan, seed, indices = args
    return [srm_record(plan, seed, i) for i in indices]


def resolve_workers(workers: Optional[int] = None) -> int:
    if workers is None:
        workers = int(os.environ.get("EPSD_WORKERS", "1"))
    return max(1, int(workers))


def srm_simulate(
    model: EpsdModel, n_samples: int, dt: float, seed: int, workers: Optional[int] = None
) -> List[TimeSeries]:
    """Simulate ``n_samples`` records by the spectral representation method.

    Each record is ``sum_k sqrt(4 S_E(f_k, t) df) cos(2 pi f_k t + phi_k)``
    with ``f_k = (k + 1/2)/T`` below Nyquist and independent uniform phases.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    plan = srm_plan(model, dt)
    workers = resolve_workers(workers)
    indices = list(range(n_samples))
    if workers == 1:
        rows = _record_block((plan, seed, indices))
    else:
        blocks = [indices[i::workers] for i in range(workers)]
        with ProcessPoolExecutor(workers) as pool:
            parts = list(pool.map(_record_block, [(plan, seed, b) for b in blocks]))
        rows = [None] * n_samples
        for block, part in zip(blocks, parts):
            for i, row in zip(block, part):
                rows[i] = row
    return [TimeSeries(r, dt) for r in rows]
