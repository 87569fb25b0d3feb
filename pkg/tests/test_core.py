import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from epsd.core import (
    CoefficientGrid,
    FrequencyAxis,
    ScaleAxis,
    SpectralGrid,
    TimeSeries,
    fourier_transform,
    inverse_fourier_transform,
)


def test_timeseries_basics():
    ts = TimeSeries([1.0, 2.0, 3.0, 4.0], 0.5, t0=1.0)
    assert ts.n == 4
    assert ts.duration == 2.0
    assert ts.nyquist == 1.0
    np.testing.assert_array_equal(ts.times, [1.0, 1.5, 2.0, 2.5])
    with pytest.raises(ValueError):
        ts.samples[0] = 5.0


def test_timeseries_rejects_nonfinite_with_index():
    with pytest.raises(ValueError, match="index 2"):
        TimeSeries([0.0, 1.0, np.nan, 3.0], 0.1)


@pytest.mark.parametrize("dt", [0.0, -0.1, np.inf])
def test_timeseries_rejects_bad_dt(dt):
    with pytest.raises(ValueError):
        TimeSeries([0.0, 1.0], dt)


def test_timeseries_needs_two_samples():
    with pytest.raises(ValueError):
        TimeSeries([1.0], 0.1)


def test_frequency_axis_validation():
    with pytest.raises(ValueError):
        FrequencyAxis([1.0, 1.0])
    with pytest.raises(ValueError):
        FrequencyAxis([-1.0, 1.0])
    with pytest.raises(ValueError):
        FrequencyAxis([])


def test_dft_bins():
    ax = FrequencyAxis.dft_bins(8, 0.25)
    np.testing.assert_allclose(ax.values, [0.5, 1.0, 1.5, 2.0])
    assert FrequencyAxis.dft_bins(8, 0.25, include_zero=True).values[0] == 0.0


def test_scale_axis():
    ax = ScaleAxis(0.5, 2.0, 4)
    np.testing.assert_allclose(ax.values, [0.5, 1.0, 2.0, 4.0])
    assert ax == ScaleAxis(0.5, 2.0, 4)
    assert hash(ax) == hash(ScaleAxis(0.5, 2.0, 4))
    with pytest.raises(ValueError):
        ScaleAxis(0.5, 1.0, 3)
    with pytest.raises(ValueError):
        ScaleAxis(0.0, 2.0, 3)


def test_grids_check_shapes_and_sign():
    f = FrequencyAxis([1.0, 2.0])
    with pytest.raises(ValueError):
        SpectralGrid(f, [0.0, 1.0, 2.0], np.ones((2, 2)))
    with pytest.raises(ValueError, match="nonnegative"):
        SpectralGrid(f, [0.0, 1.0], -np.ones((2, 2)))
    g = SpectralGrid(f, [0.0, 1.0], -np.ones((2, 2)), signed=True)
    assert g.signed
    c = CoefficientGrid(ScaleAxis(1.0, 2.0, 2), [0.0, 1.0], np.ones((2, 2)) * 1j)
    assert c.axis_kind == "scale"
    with pytest.raises(ValueError):
        CoefficientGrid(f, [0.0, 1.0], np.full((2, 2), np.nan))


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.integers(2, 64), elements=st.floats(-1e6, 1e6)))
def test_fourier_round_trip(x):
    ts = TimeSeries(x, 0.01)
    bins, freqs = fourier_transform(ts)
    assert freqs.size == x.size
    back = inverse_fourier_transform(bins, 0.01)
    np.testing.assert_allclose(back.samples, x, atol=1e-9 * (1 + np.abs(x).max()))
