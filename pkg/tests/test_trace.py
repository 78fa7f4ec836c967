"""Trace loading, validation, and the MAPE metric."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from carbonnas.trace import (
    CarbonTrace,
    TraceError,
    intensity_at,
    load_trace,
    mape,
    serialize_trace,
    sinusoid_trace,
    square_wave_trace,
    window_extremes,
)

HEADER = "timestamp,carbon_intensity\n"


def _write(tmp_path, body, name="trace.csv"):
    p = tmp_path / name
    p.write_text(HEADER + body)
    return p


def test_load_simple_trace(tmp_path):
    p = _write(
        tmp_path,
        "2021-07-02T00:00:00+00:00,100.0\n"
        "2021-07-02T01:00:00+00:00,150.5\n"
        "2021-07-02T02:00:00+00:00,99.25\n",
    )
    tr = load_trace(p)
    assert len(tr) == 3
    assert tr.region_id == "trace"
    assert intensity_at(tr, 1) == 150.5


def test_load_rejects_bad_header(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("time,value\n2021-07-02T00:00:00Z,1\n")
    with pytest.raises(TraceError, match="line 1"):
        load_trace(p)


@pytest.mark.parametrize(
    "second_row, fragment",
    [
        ("2021-07-02T00:30:00+00:00,50", "not hour-aligned"),
        ("2021-07-02T00:00:00+00:00,50", "duplicate hour"),
        ("2021-07-02T02:00:00+00:00,50", "gap or irregular"),
        ("2021-07-02T01:00:00+00:00,oops", "bad intensity"),
        ("2021-07-02T01:00:00+00:00,-3", "negative intensity"),
        ("not-a-date,50", "bad timestamp"),
    ],
)
def test_load_rejects_malformed_rows(tmp_path, second_row, fragment):
    p = _write(tmp_path, "2021-07-02T00:00:00+00:00,100\n" + second_row + "\n")
    with pytest.raises(TraceError, match=fragment) as exc:
        load_trace(p)
    # errors carry the 1-based line number of the offending row
    assert "line 3" in str(exc.value)


def test_load_missing_file(tmp_path):
    with pytest.raises(TraceError, match="not found"):
        load_trace(tmp_path / "nope.csv")


def test_load_empty_body(tmp_path):
    p = _write(tmp_path, "")
    with pytest.raises(TraceError, match="no data rows"):
        load_trace(p)


def test_roundtrip_serialize_load(tmp_path):
    tr = sinusoid_trace(mean=200, amplitude=80, hours=48, noise_sd=5.0, seed=3)
    p = tmp_path / "rt.csv"
    serialize_trace(tr, p)
    back = load_trace(p, region_id=tr.region_id)
    np.testing.assert_array_equal(back.intensities, tr.intensities)
    assert back.start == tr.start


def test_trace_is_immutable():
    tr = square_wave_trace(50, 300, 12, 24)
    with pytest.raises(ValueError):
        tr.intensities[0] = 1.0


def test_trace_rejects_bad_values():
    from datetime import datetime, timezone

    start = datetime(2021, 7, 2, tzinfo=timezone.utc)
    with pytest.raises(TraceError):
        CarbonTrace("r", start, np.array([]))
    with pytest.raises(TraceError):
        CarbonTrace("r", start, np.array([1.0, np.nan]))
    with pytest.raises(TraceError):
        CarbonTrace("r", start, np.array([1.0, -2.0]))


def test_square_wave_levels():
    tr = square_wave_trace(low=80, high=400, half_period=12, hours=48)
    assert list(tr.intensities[:12]) == [80.0] * 12
    assert list(tr.intensities[12:24]) == [400.0] * 12
    assert set(tr.intensities) == {80.0, 400.0}


def test_window_extremes_square_wave():
    tr = square_wave_trace(80, 400, 12, 48)
    w = window_extremes(tr, 0, 23)
    assert (w.c_min, w.c_max) == (80.0, 400.0)
    w_low = window_extremes(tr, 0, 11)
    assert (w_low.c_min, w_low.c_max) == (80.0, 80.0)
    with pytest.raises(IndexError):
        window_extremes(tr, 0, 48)


def test_intensity_at_bounds():
    tr = square_wave_trace(80, 400, 12, 24)
    with pytest.raises(IndexError):
        intensity_at(tr, 24)
    with pytest.raises(IndexError):
        intensity_at(tr, -1)


def test_mape_hand_value():
    # |100-110|/100 = 0.1, |200-180|/200 = 0.1 -> mean 10%
    assert mape([100, 200], [110, 180]) == pytest.approx(10.0)


def test_mape_perfect_and_errors():
    assert mape([5, 7, 9], [5, 7, 9]) == 0.0
    with pytest.raises(ValueError):
        mape([0.0, 1.0], [1.0, 1.0])
    with pytest.raises(ValueError):
        mape([1.0], [1.0, 2.0])


@given(
    vals=st.lists(st.floats(min_value=1.0, max_value=1e4), min_size=1, max_size=50),
    scale=st.floats(min_value=0.1, max_value=10.0),
)
def test_mape_scale_invariance(vals, scale):
    """Rescaling actual and predicted together leaves MAPE unchanged."""
    a = np.array(vals)
    p = a * 1.07
    assert mape(a * scale, p * scale) == pytest.approx(mape(a, p), rel=1e-9)


@given(
    hours=st.integers(min_value=1, max_value=200),
    t0=st.integers(min_value=0, max_value=199),
    t1=st.integers(min_value=0, max_value=199),
)
@settings(max_examples=60)
def test_window_extremes_bound_every_member(hours, t0, t1):
    if not (t0 <= t1 < hours):
        return
    tr = sinusoid_trace(mean=300, amplitude=120, hours=hours, noise_sd=20, seed=hours)
    w = window_extremes(tr, t0, t1)
    segment = tr.intensities[t0 : t1 + 1]
    assert w.c_min <= segment.min() + 1e-12
    assert w.c_max >= segment.max() - 1e-12
    assert w.c_min == segment.min() and w.c_max == segment.max()
