import json
import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from epsd import io, pipeline
from epsd import kernels as K
from epsd.cli import main, parse_spec, parse_sweep, UsageError
from epsd.core import FrequencyAxis, ScaleAxis, SpectralGrid, TimeSeries
from epsd.kernels import SpecError
from epsd.transforms import cwt, stft

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


# ---------------------------------------------------------------- io round trips


@settings(max_examples=25, deadline=None)
@given(hnp.arrays(float, st.integers(2, 40), elements=finite), st.sampled_from([0.01, 0.02, 0.125]), finite)
def test_series_round_trip(tmp_path_factory, x, dt, t0):
    path = tmp_path_factory.mktemp("s") / "x.csv"
    ts = TimeSeries(x, dt, t0=t0 / 1e3)
    io.write_series(path, ts)
    back = io.read_series(path)
    np.testing.assert_array_equal(back.samples, ts.samples)
    assert back.dt == pytest.approx(dt, rel=1e-12)
    assert back.t0 == ts.t0


@settings(max_examples=25, deadline=None)
@given(hnp.arrays(float, st.tuples(st.integers(1, 6), st.integers(1, 6)), elements=finite))
def test_grid_round_trip(tmp_path_factory, values):
    path = tmp_path_factory.mktemp("g") / "g.csv"
    nf, nt = values.shape
    signed = bool(np.any(values < 0))
    grid = SpectralGrid(FrequencyAxis(np.geomspace(0.1, 20, nf)), 0.05 * np.arange(nt), values, signed=signed)
    io.write_grid(path, grid)
    back = io.read_grid(path)
    assert back.same_axes(grid)
    np.testing.assert_array_equal(back.values, grid.values)
    assert back.signed == signed


def test_grid_csv_layout(tmp_path):
    grid = SpectralGrid(FrequencyAxis([1.0, 2.0]), [0.0, 0.5], [[1.0, 2.0], [3.0, 4.0]])
    io.write_grid(tmp_path / "g.csv", grid)
    lines = (tmp_path / "g.csv").read_text().splitlines()
    assert lines[0] == "time_s,freq_hz,value"
    assert lines[1:] == ["0,1,1", "0,2,3", "0.5,1,2", "0.5,2,4"]


@pytest.mark.parametrize("kind", ["stft", "cwt"])
def test_coefficient_round_trip(tmp_path, kind):
    ts = TimeSeries(np.random.default_rng(2).standard_normal(128), 0.02)
    if kind == "stft":
        c = stft(ts, K.StftGauss(0.2), [1.0, 3.0, 7.5])
    else:
        c = cwt(ts, K.CwtMorse(20, 3), ScaleAxis(0.01, 2**0.5, 10))
    path = tmp_path / "c.csv"
    io.write_coefficients(path, c)
    back = io.read_coefficients(path)
    assert back.axis_kind == c.axis_kind
    np.testing.assert_array_equal(back.values, c.values)
    np.testing.assert_array_equal(back.axis.values, c.axis.values)
    assert back.dropped_levels == c.dropped_levels


def test_readers_reject_bad_files(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("t,x\n0,1\n")
    with pytest.raises(ValueError, match="header"):
        io.read_series(p)
    p.write_text("time_s,value\n0,1\n0.1,2\n0.3,3\n")
    with pytest.raises(ValueError, match="uniformly"):
        io.read_series(p)
    p.write_text("time_s,freq_hz,value\n0,1,1\n0,2,1\n1,1,1\n")
    with pytest.raises(ValueError, match="rectangular"):
        io.read_grid(p)


def test_atomic_write_leaves_no_temp_files(tmp_path):
    target = tmp_path / "sub" / "a.txt"
    io.atomic_write_text(target, "one")
    io.atomic_write_text(target, "two")
    assert target.read_text() == "two"
    assert os.listdir(target.parent) == ["a.txt"]


def test_atomic_write_failure_keeps_old_content(tmp_path):
    target = tmp_path / "a.txt"
    io.atomic_write_text(target, "old")

    with pytest.raises(TypeError):
        io.atomic_write_text(target, 12345)  # not text
    assert target.read_text() == "old"
    assert os.listdir(tmp_path) == ["a.txt"]


# ---------------------------------------------------------------- spec parsing


@pytest.mark.parametrize(
    "text,expected",
    [
        ('{"transform": "stft-box", "h": 1.0}', K.StftBox(1.0)),
        ('{"transform": "stft-gauss", "sigma": 0.5}', K.StftGauss(0.5)),
        ('{"transform": "s-transform", "kappa": 1}', K.STrans(1.0)),
        ('{"transform": "cwt-harmonic", "m": 1, "n": 2}', K.CwtHarmonic(1, 2)),
        ('{"transform": "cwt-morse", "beta": 20, "gamma": 3}', K.CwtMorse(20, 3)),
    ],
)
def test_parse_spec_examples(text, expected):
    assert parse_spec(text) == expected


def test_parse_spec_generalized_and_axis():
    spec = parse_spec('{"transform": "s-transform", "K": {"kind": "power-law", "kappa0": 1, "f_ref": 1, "p": 0.5}}')
    assert isinstance(spec, K.STransGeneralized)
    spec = parse_spec('{"transform": "cwt-morse", "beta": 20, "gamma": 3, "c0": 0.01, "s0": 1.1, "levels": 5}')
    assert spec.scale_axis == ScaleAxis(0.01, 1.1, 5)


@pytest.mark.parametrize(
    "text,match",
    [
        ("{not json", "malformed"),
        ('{"h": 1}', "transform"),
        ('{"transform": "wigner"}', "unknown transform"),
        ('{"transform": "stft-box"}', "'h'"),
        ('{"transform": "stft-box", "h": 1, "w": 2}', "unknown field"),
        ('{"transform": "stft-box", "h": "1"}', "number"),
        ('{"transform": "s-transform", "kappa": 1, "K": {"kind": "table", "freqs": [1], "values": [1]}}', "either"),
        ('{"transform": "cwt-harmonic", "m": 2, "n": 2}', "m < n"),
        ('{"transform": "cwt-morse", "beta": 20, "gamma": 3, "s0": 1.1}', "scale axis"),
    ],
)
def test_parse_spec_errors(text, match):
    with pytest.raises(SpecError, match=match):
        parse_spec(text)


def test_parse_sweep():
    name, v = parse_sweep("sigma=0.5:2:3")
    assert name == "sigma"
    np.testing.assert_allclose(v, [0.5, 1.0, 2.0])
    name, v = parse_sweep("m=0:1:3")
    np.testing.assert_allclose(v, [0, 0.5, 1])
    for bad in ("sigma", "sigma=1:2", "sigma=0:1:3", "h=1:2:0"):
        with pytest.raises(UsageError):
            parse_sweep(bad)


# ---------------------------------------------------------------- CLI


def test_version(capsys):
    assert main(["--version"]) == 0
    assert capsys.readouterr().out.strip() == "epsd 0.1.0"


def test_constants(capsys):
    assert main(["constants", "--spec", '{"transform": "cwt-harmonic", "m": 1, "n": 2}']) == 0
    assert "epsd_scale 1.03972" in capsys.readouterr().out
    assert main(["constants", "--json", "--spec", '{"transform": "cwt-morse", "beta": 20, "gamma": 3}']) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["epsd_scale"] == pytest.approx(1.00840, abs=5e-6)


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["constants"],
        ["constants", "--spec", '{"transform": "cwt-harmonic", "m": 2, "n": 2}'],
        ["constants", "--spec", "nope"],
        ["ratios", "--spec", "stft-gauss", "--sweep", "sigma=1:2", "--tuple", "0,0,2,0"],
        ["ratios", "--spec", "cwt-morse", "--sweep", "beta=10:20:2", "--tuple", "0,1"],
        ["simulate", "--samples", "1", "--seed", "1"],
    ],
)
def test_usage_errors_exit_2(argv, capsys):
    assert main(argv) == 2
    assert capsys.readouterr().err


def test_computation_error_exits_1(tmp_path, capsys):
    rec = tmp_path / "r.csv"
    io.write_series(rec, TimeSeries(np.ones(20), 0.02))
    assert main(["estimate", "--input", str(rec), "--spec", '{"transform": "stft-box", "h": 5}', "--out", str(tmp_path / "e.csv")]) == 1
    assert "error" in capsys.readouterr().err
    assert main(["estimate", "--input", str(tmp_path / "missing.csv"), "--spec", "{\"transform\": \"stft-box\", \"h\": 1}", "--out", str(tmp_path / "e.csv")]) == 1


def test_ratios_sweep_matches_closed_form(tmp_path):
    out = tmp_path / "r.csv"
    assert main(["ratios", "--spec", "stft-gauss", "--sweep", "sigma=0.5:4:4", "--tuple", "0,0,2,0", "--out", str(out)]) == 0
    data = np.loadtxt(out, delimiter=",", skiprows=1)
    assert out.read_text().startswith("sigma,ratio\n")
    np.testing.assert_allclose(data[:, 1], data[:, 0] ** 2 / 2, rtol=1e-9)
    assert main(["ratios", "--spec", "stft-gauss", "--sweep", "sigma=0.25:4:16", "--tuple", "0,0,2,0", "--out", str(out)]) == 0
    data = np.loadtxt(out, delimiter=",", skiprows=1)
    np.testing.assert_allclose(data[:, 0], np.geomspace(0.25, 4, 16), rtol=1e-15)
    np.testing.assert_allclose(data[:, 1], data[:, 0] ** 2 / 2, rtol=1e-9)


def test_ratios_to_stdout_over_frequency(capsys):
    assert main(["ratios", "--spec", "cwt-harmonic", "--sweep", "f=0.5:4:3", "--tuple", "0,1"]) == 0
    rows = capsys.readouterr().out.splitlines()
    assert rows[0] == "f,ratio"
    f = np.geomspace(0.5, 4, 3)
    # r_w(0,1) is the scale itself, f0 / f with f0 = 1.5 for (m, n) = (1, 2)
    np.testing.assert_allclose([float(r.split(",")[1]) for r in rows[1:]], 1.5 / f, rtol=1e-9)


def test_simulate_is_reproducible(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", "--samples", "3", "--seed", "9", "--out", str(a)]) == 0
    assert main(["simulate", "--samples", "3", "--seed", "9", "--out", str(b), "--workers", "2"]) == 0
    names = sorted(os.listdir(a))
    assert names == ["manifest.json", "record_00000.csv", "record_00001.csv", "record_00002.csv"]
    for n in names:
        assert (a / n).read_bytes() == (b / n).read_bytes()
    man = io.read_json(a / "manifest.json")
    assert (man["seed"], man["samples"], man["n"]) == (9, 3, 1075)
    assert io.read_series(a / "record_00001.csv").n == 1075


def test_transform_and_estimate(tmp_path):
    sim = tmp_path / "sim"
    assert main(["simulate", "--samples", "2", "--seed", "1", "--out", str(sim)]) == 0
    spec = '{"transform": "stft-gauss", "sigma": 1}'
    rec = sim / "record_00000.csv"
    assert main(["transform", "--input", str(rec), "--spec", spec, "--out", str(tmp_path / "c.csv")]) == 0
    c = io.read_coefficients(tmp_path / "c.csv")
    assert c.values.shape[1] == 1075

    assert main(["estimate", "--input", str(rec), "--spec", spec, "--out", str(tmp_path / "e.csv")]) == 0
    e = io.read_grid(tmp_path / "e.csv")
    np.testing.assert_allclose(e.values, np.abs(c.values) ** 2 / K.norm_constants(K.StftGauss(1.0)).cn2, rtol=1e-12)

    assert main(["estimate", "--input", str(sim), "--spec", spec, "--stats", "--out", str(tmp_path / "m.csv")]) == 0
    m = io.read_grid(tmp_path / "m.csv")
    s = io.read_grid(tmp_path / "m_std.csv")
    e1 = io.read_grid(tmp_path / "e.csv").values
    assert m.values.shape == s.values.shape == e1.shape
    assert np.all(s.values >= 0)

    # a directory without --stats is a usage error
    assert main(["estimate", "--input", str(sim), "--spec", spec, "--out", str(tmp_path / "x.csv")]) == 2


def test_residual_command(tmp_path, capsys):
    out = tmp_path / "r.csv"
    argv = ["residual", "--spec", '{"transform": "stft-gauss", "sigma": 1}', "--order", "2"]
    assert main(argv + ["--fmin", "0.5", "--fmax", "5", "--tstep", "25", "--out", str(out)]) == 0
    assert capsys.readouterr().out.startswith("aggregate_abs ")
    g = io.read_grid(out)
    assert g.freqs.values.min() >= 0.5 and g.freqs.values.max() <= 5
    assert g.signed
    assert main(argv + ["--fmin", "30", "--out", str(out)]) == 2


def test_residual_study_command(tmp_path):
    out = tmp_path / "rs"
    assert main(["residual-study", "--fmin", "0.5", "--fmax", "3", "--tstep", "50", "--out", str(out)]) == 0
    summ = io.read_json(out / "summary.json")
    assert len(summ["aggregate_abs"]) == 7  # three window transforms plus two orders per wavelet
    assert summ["band_hz"] == 25.0


def test_mc_command(tmp_path, monkeypatch):
    monkeypatch.setenv("EPSD_WORKERS", "2")
    out = tmp_path / "mc"
    assert main(["mc", "--samples", "2", "--seed", "3", "--tstep", "100", "--out", str(out)]) == 0
    summ = io.read_json(out / "summary.json")
    assert set(summ["specs"]) == {K.label(s) for s in pipeline.figure8_preset()}
    assert summ["failures"] == {}
    g = io.read_grid(out / f"{K.label(K.StftGauss(1.0))}_mean.csv")
    assert g.times.size == 11
    monkeypatch.setenv("EPSD_WORKERS", "many")
    assert main(["mc", "--samples", "2", "--seed", "3", "--out", str(out)]) == 2
