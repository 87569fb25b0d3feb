"""Acceptance criteria 1-8. Each test records one PASS/FAIL line."""

import math
import warnings

import numpy as np
import pytest
from scipy import integrate

from epsd import kernels as K
from epsd import pipeline as P
from epsd import residuals as R
from epsd.core import FrequencyAxis
from epsd.simulator import EpsdModel, constant_model, seismic_model, srm_simulate

import conftest
import oracles

pytestmark = pytest.mark.acceptance


def _report(n, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
    conftest.ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def _window_energy(spec, panels=20000):
    """Two-sided integral of |v^(xi)|^2 by Gauss-Legendre over half-period panels plus a tail."""
    scale = 1.0 / (2.0 * spec.h) if isinstance(spec, K.StftBox) else 1.0 / spec.sigma
    edges = np.arange(panels + 1) * scale
    x, w = np.polynomial.legendre.leggauss(24)
    mid, half = 0.5 * (edges[1:] + edges[:-1]), 0.5 * np.diff(edges)
    xi = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    ww = (half[:, None] * w[None, :]).ravel()
    body = float(np.sum(ww * np.abs(K.window_ft(spec, xi)) ** 2))
    tail = 0.0
    if isinstance(spec, K.StftBox):
        # sin^2 averages to 1/2 beyond the last panel
        tail = 1.0 / (8 * math.pi**2 * spec.h**2 * edges[-1])
    return 2.0 * (body + tail)


# ---------------------------------------------------------------- 1


def test_criterion_1_constants():
    hw = K.norm_constants(K.CwtHarmonic(1, 2)).epsd_scale
    gmw = K.norm_constants(K.CwtMorse(20, 3)).epsd_scale
    errs = []
    for spec, closed in [
        (K.StftBox(0.5), 1 / (2 * 0.5)),
        (K.StftBox(2.0), 1 / (2 * 2.0)),
        (K.StftGauss(0.5), 1 / (2 * 0.5 * math.sqrt(math.pi))),
        (K.StftGauss(2.0), 1 / (2 * 2.0 * math.sqrt(math.pi))),
    ]:
        cn2 = K.norm_constants(spec).cn2
        errs.append(max(abs(cn2 / closed - 1), abs(_window_energy(spec) / cn2 - 1)))
    ok = abs(hw - 1.040) <= 0.001 and abs(gmw - 1.008) <= 0.002 and max(errs) < 1e-6
    _report(1, ok, f"HW scale {hw:.5f}, GMW scale {gmw:.5f}, max C_n^2 rel err {max(errs):.1e}")


# ---------------------------------------------------------------- 2


def test_criterion_2_d_kappa():
    dev = {k: K.d_kappa(k) / K.norm_constants(K.STrans(k), 1.0).cns0 - 1 for k in (1, 1.5, 2, 3)}
    for k, v in dev.items():
        assert v == pytest.approx(oracles.d_kappa_ratio_dawson(k) - 1, rel=1e-3, abs=1e-6)
    kappas = np.geomspace(0.1, 3, 30)
    with warnings.catch_warnings():
        # kappa = 0.1 sits on the calibration edge of the regression
        warnings.simplefilter("ignore", K.RegressionRangeWarning)
        reg = np.array([K.d_kappa(k, "regression") / K.d_kappa(k) - 1 for k in kappas])
    worst = max(abs(v) for v in dev.values())
    ok = worst < 0.015 and np.abs(reg).max() < 0.10
    _report(2, ok, f"max |D/C_nS0 - 1| {worst:.4f}, max regression deviation {np.abs(reg).max():.3f}")


# ---------------------------------------------------------------- 3


def test_criterion_3_ratio_closed_forms():
    errs = []

    def check(got, want):
        errs.append(abs(got / want - 1))

    for s in (0.5, 1.0, 2.0):
        g = K.StftGauss(s)
        check(R.ratio_stft(g, 2, 2, 0, 0), 1 / (8 * math.pi**2 * s**2))
        check(R.ratio_stft(g, 0, 0, 2, 0), s**2 / 2)
        check(R.ratio_stft(g, 0, 1, 0, 1), s**2 / 2)
    for kap in (0.5, 1.0, 2.0):
        st = K.STrans(kap)
        for f in (0.5, 1.5, 5.0):
            check(R.ratio_st(st, f, 2, 2, 0, 0), f**2 / (8 * math.pi**2 * kap**2))
            check(R.ratio_st(st, f, 0, 0, 2, 0), kap**2 / (2 * f**2))
            check(R.ratio_st(st, f, 0, 1, 0, 1), kap**2 / (2 * f**2))
    exact_zero = True
    for spec in (K.CwtHarmonic(1, 2), K.CwtHarmonic(1, 2**0.5), K.CwtMorse(20, 3)):
        f0 = K.center_frequency(spec)
        for f in (0.5, 1.5, 5.0):
            for k in (1, 2):
                check(R.ratio_cwt(spec, f, 0, k), (f0 / f) ** k)
            if isinstance(spec, K.CwtHarmonic):
                exact_zero &= R.ratio_cwt(spec, f, 1, 0) == 0.0 and R.ratio_cwt(spec, f, 1, 1) == 0.0
                check(R.ratio_cwt(spec, f, 2, 0), (spec.n - spec.m) ** 2 * f**2 / (12 * f0**2))
    ok = max(errs) < 1e-6 and exact_zero
    _report(3, ok, f"{len(errs)} ratios, max rel err {max(errs):.1e}, HW odd ratios exactly zero: {exact_zero}")


# ---------------------------------------------------------------- 4


def _strict(seq, direction):
    d = np.diff(np.asarray(seq, dtype=float))
    return bool(np.all(d > 0)) if direction > 0 else bool(np.all(d < 0))


def test_criterion_4_ratio_trends():
    checks = {}
    hs = np.geomspace(0.25, 4, 8)
    box = [K.StftBox(h) for h in hs]
    checks["box r2200 down in h"] = _strict([R.ratio_stft(b, 2, 2, 0, 0, band=25.0) for b in box], -1)
    checks["box r0020 up in h"] = _strict([R.ratio_stft(b, 0, 0, 2, 0) for b in box], +1)
    checks["box r0101 up in h"] = _strict([R.ratio_stft(b, 0, 1, 0, 1) for b in box], +1)
    gs = [K.StftGauss(s) for s in hs]
    checks["gauss r2200 down in sigma"] = _strict([R.ratio_stft(g, 2, 2, 0, 0) for g in gs], -1)
    checks["gauss r0020 up in sigma"] = _strict([R.ratio_stft(g, 0, 0, 2, 0) for g in gs], +1)
    checks["gauss r0101 up in sigma"] = _strict([R.ratio_stft(g, 0, 1, 0, 1) for g in gs], +1)

    kap = np.geomspace(0.5, 3, 8)
    fs = np.geomspace(0.5, 10, 8)
    st1 = K.STrans(1.0)
    checks["ST r2200 down in kappa"] = _strict([R.ratio_st(K.STrans(k), 1.0, 2, 2, 0, 0) for k in kap], -1)
    checks["ST r2200 up in f"] = _strict([R.ratio_st(st1, f, 2, 2, 0, 0) for f in fs], +1)
    for tup in ((0, 0, 2, 0), (0, 1, 0, 1)):
        name = "r" + "".join(map(str, tup))
        checks[f"ST {name} up in kappa"] = _strict([R.ratio_st(K.STrans(k), 1.0, *tup) for k in kap], +1)
        checks[f"ST {name} down in f"] = _strict([R.ratio_st(st1, f, *tup) for f in fs], -1)

    for spec in (K.CwtHarmonic(1, 2**0.5), K.CwtMorse(20, 3)):
        tag = K.label(spec)
        checks[f"{tag} r01 down in f"] = _strict([R.ratio_cwt(spec, f, 0, 1) for f in fs], -1)
        checks[f"{tag} r02 down in f"] = _strict([R.ratio_cwt(spec, f, 0, 2) for f in fs], -1)
        checks[f"{tag} r20 up in f"] = _strict([R.ratio_cwt(spec, f, 2, 0) for f in fs], +1)

    bad = [k for k, v in checks.items() if not v]
    _report(4, not bad, f"{len(checks) - len(bad)}/{len(checks)} sweeps strictly monotone" + (f"; failed: {bad}" if bad else ""))


# ---------------------------------------------------------------- 5


def test_criterion_5_residual_identities():
    model = seismic_model()
    freqs = np.geomspace(0.3, 12, 9)
    times = np.linspace(1.0, 20.0, 9)
    specs = [K.StftBox(1.0), K.StftGauss(1.0), K.STrans(1.0), K.CwtHarmonic(1, 2**0.5), K.CwtMorse(20, 3)]

    first_zero = all(
        np.all(R.residual_grid(model, s, freqs, times, 1, band=25.0).values == 0) for s in specs[:3]
    )
    const = constant_model(3.0, 21.5)
    const_zero = all(
        np.all(R.residual_grid(const, s, freqs, times, o, band=25.0).values == 0) for s in specs for o in (1, 2)
    )
    # A -> 2A is exact in floating point, so the residual must scale by exactly 4
    scaled = EpsdModel(lambda f, t: 4.0 * model(f, t), model.duration)
    exact = True
    for s in specs:
        for o in (1, 2):
            a = R.residual_grid(model, s, freqs, times, o, band=25.0, method="fd").values
            b = R.residual_grid(scaled, s, freqs, times, o, band=25.0, method="fd").values
            exact &= bool(np.array_equal(b, 4.0 * a))
    ok = first_zero and const_zero and exact
    _report(5, ok, f"R(;1)=0 for windows: {first_zero}, constant model zero: {const_zero}, c^2 scaling exact: {exact}")


# ---------------------------------------------------------------- 6


@pytest.mark.slow
def test_criterion_6_monte_carlo(figure8_mc, seismic_params):
    p = seismic_params
    intensity = lambda t: p.E_T * p.lambda0(t)  # noqa: E731
    rows, ok = [], not figure8_mc.failures and len(figure8_mc.results) == 5
    for name, res in figure8_mc.results.items():
        pr = P.power_ratio(res)
        rt = P.time_marginal_corr(res, intensity)
        rf = P.freq_marginal_corr(res, 8.0)
        ok &= abs(pr - 1) <= 0.07 and rt > 0.98 and rf > 0.95
        rows.append(f"{name} power {pr:.3f} r_t {rt:.4f} r_f {rf:.4f}")
    _report(6, ok, "; ".join(rows))


# ---------------------------------------------------------------- 7


def test_criterion_7_residual_study(seismic):
    n = int(round(seismic.duration / conftest.DT))
    freqs = FrequencyAxis.dft_bins(n, conftest.DT).values
    times = conftest.DT * np.arange(1, n)
    specs = P.figure8_preset(n, conftest.DT)
    study = P.run_residual_study(seismic, specs, freqs, times, band=0.5 / conftest.DT)
    agg = {name: {o: R.aggregate_abs(g, seismic) for o, g in grids.items()} for name, grids in study.items()}
    box, gauss, st, hw, gmw = (agg[K.label(s)] for s in specs)
    ok = st[2] < box[2] and st[2] < gauss[2] and hw[1] > gmw[1]
    _report(
        7,
        ok,
        f"|R2| box {box[2]:.3f} gauss {gauss[2]:.3f} ST {st[2]:.3f}; |R1| HW {hw[1]:.3f} GMW {gmw[1]:.3f}",
    )


# ---------------------------------------------------------------- 8


@pytest.mark.slow
def test_criterion_8_simulator(seismic, seismic_params, seismic_ensemble):
    p = seismic_params
    errs = {}
    for t in (6.0, 8.0, 12.0):
        q = int(round(t / conftest.DT))
        var = seismic_ensemble[:, q].var(ddof=1)
        target = 2 * integrate.quad(lambda f: float(seismic(f, t)), 0, np.inf, limit=300)[0]
        assert target == pytest.approx(p.E_T * float(p.lambda0(t)), rel=1e-6)
        errs[t] = var / target - 1
    sub = srm_simulate(seismic, 12, conftest.DT, conftest.SEED, workers=2)
    same_records = all(np.array_equal(r.samples, seismic_ensemble[i]) for i, r in enumerate(sub))
    specs = P.figure8_preset(400, conftest.DT)
    short = constant_model(1.0, 8.0)
    a = P.run_mc(short, specs, 12, conftest.DT, conftest.SEED, workers=1, chunk=5)
    b = P.run_mc(short, specs, 12, conftest.DT, conftest.SEED, workers=2, chunk=5)
    same_mc = all(
        np.array_equal(a.results[k].mean.values, b.results[k].mean.values)
        and np.array_equal(a.results[k].std.values, b.results[k].std.values)
        for k in a.results
    )
    ok = all(abs(e) < 0.05 for e in errs.values()) and same_records and same_mc
    detail = ", ".join(f"t={t:g} {100 * e:+.1f}%" for t, e in errs.items())
    _report(8, ok, f"variance {detail}; bit-exact records: {same_records}, bit-exact MC: {same_mc}")
