import numpy as np
import pytest
from hypothesis import given, strategies as st

from hnl.data import (DataError, RawSeries, SyntheticSpec, align, build_windows, load_csv, resample,
                      synthesize_energy, synthesize_toy, write_csv)
from hnl.metrics import block_downsample, dft_amplitudes


def write(tmp_path, text, name="s.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def hourly_series(days, start="2021-01-01T00:00:00", resolution=12.0, seed=0):
    n = int(days * 24 * resolution)
    step = np.timedelta64(int(3600e9 / resolution), "ns")
    ts = np.datetime64(start, "ns") + np.arange(n) * step
    vals = np.random.default_rng(seed).normal(size=n)
    return RawSeries(ts, vals, resolution, np.zeros((n, 1)), ("x",), "load")


# ---- CSV ingestion

def test_three_row_file(tmp_path):
    p = write(tmp_path, "timestamp,value\n2021-01-01T00:00:00Z,1\n2021-01-01T01:00:00Z,2\n"
                        "2021-01-01T02:00:00Z,3.5\n")
    s = load_csv(p)
    assert len(s) == 3 and s.resolution == 1.0
    np.testing.assert_array_equal(s.values, [1, 2, 3.5])


def test_duplicate_timestamp(tmp_path):
    p = write(tmp_path, "timestamp,value\n2021-01-01T00:00:00Z,1\n2021-01-01T00:00:00Z,2\n"
                        "2021-01-01T01:00:00Z,3\n")
    with pytest.raises(DataError, match="duplicated"):
        load_csv(p)


def test_non_uniform_spacing_lists_rows(tmp_path):
    p = write(tmp_path, "timestamp,value\n2021-01-01T00:00:00Z,1\n2021-01-01T01:00:00Z,2\n"
                        "2021-01-01T03:00:00Z,3\n")
    with pytest.raises(DataError, match=r"lines \[4\]"):
        load_csv(p)


def test_unparsable_cell_names_line(tmp_path):
    p = write(tmp_path, "timestamp,value\n2021-01-01T00:00:00Z,1\n2021-01-01T01:00:00Z,abc\n")
    with pytest.raises(DataError, match=":3:"):
        load_csv(p)


def test_missing_values_interpolated_and_counted(tmp_path):
    rows = [f"2021-01-01T{h:02d}:00:00Z,{v}" for h, v in enumerate(["1", "", "", "4", "5"])]
    s = load_csv(write(tmp_path, "timestamp,value\n" + "\n".join(rows) + "\n"))
    np.testing.assert_allclose(s.values, [1, 2, 3, 4, 5])
    assert s.filled == 2


def test_long_gap_is_an_error(tmp_path):
    rows = [f"2021-01-01T{h:02d}:00:00Z,{v}" for h, v in enumerate(["1", "", "", "", "", "6"])]
    with pytest.raises(DataError, match="consecutive"):
        load_csv(write(tmp_path, "timestamp,value\n" + "\n".join(rows) + "\n"))


def test_exogenous_columns_and_round_trip(tmp_path):
    s = synthesize_energy(SyntheticSpec(duration=2, seed=1))["wind"]
    p = write_csv(s, tmp_path / "w.csv")
    back = load_csv(p)
    assert back.exog_names == ("windspeed_fc",) and back.name == "wind"
    np.testing.assert_array_equal(back.values, s.values)
    np.testing.assert_array_equal(back.timestamps, s.timestamps)
    assert back.resolution == 12.0


# ---- resampling

def test_resample_triples():
    s = hourly_series(1)
    r = resample(s, 4.0)
    np.testing.assert_allclose(r.values[:2], [s.values[:3].mean(), s.values[3:6].mean()], rtol=1e-14)
    assert r.timestamps[0] == s.timestamps[2]


def test_resample_identity_and_errors():
    s = hourly_series(1)
    np.testing.assert_array_equal(resample(s, 12.0).values, s.values)
    with pytest.raises(ValueError):
        resample(s, 12 / 7 * 5)  # 5-min to 7-min
    with pytest.raises(DataError):
        resample(s, 24.0)


def test_resample_shares_block_downsample():
    s = hourly_series(2)
    assert np.array_equal(resample(s, 1.0).values, block_downsample(s.values, 12, 1))


@given(st.integers(0, 1000), st.sampled_from([(12, 4, 1), (12, 2, 1), (4, 2, 1)]))
def test_resample_composition(seed, ladder):
    a, b, c = ladder
    s = hourly_series(1, resolution=a, seed=seed)
    assert np.array_equal(resample(resample(s, b), c).values, resample(s, c).values)


# ---- windows and splits

def test_window_count_interval_ending_stamps():
    s = hourly_series(10, start="2021-01-01T00:05:00")
    ws = build_windows(align(s, (1.0, 0.0, 0.0)), 24, 24, 24)
    assert len(ws) == 9


def test_window_count_interval_starting_file():
    # Stamps 00:00 .. 23:55 leave the last target day one sample short.
    s = hourly_series(10, start="2021-01-01T00:00:00")
    ws = build_windows(align(s, (1.0, 0.0, 0.0)), 24, 24, 24)
    assert len(ws) == 8


def test_halving_stride_roughly_doubles():
    s = hourly_series(10, start="2021-01-01T00:05:00")
    a = len(build_windows(align(s, (1.0, 0.0, 0.0)), 24, 24, 24))
    b = len(build_windows(align(s, (1.0, 0.0, 0.0)), 24, 24, 12))
    assert b == 2 * a - 1


def test_windows_never_straddle_splits():
    s = hourly_series(20, start="2021-01-01T00:05:00")
    ds = align(s)
    ws = build_windows(ds, 24, 24, 6)
    step = np.timedelta64(int(3600e9 / 12), "ns")
    for o, lab in zip(ws.origins, ws.split):
        i = int((o - s.timestamps[0]) // step)
        lo, hi = ds.splits[lab]
        assert lo <= i - 287 and i + 288 < hi


def test_insufficient_data():
    with pytest.raises(DataError, match="available"):
        build_windows(align(hourly_series(1.5)), 24, 24, 24)


def test_window_contents_align():
    s = hourly_series(4, start="2021-01-01T00:05:00")
    ws = build_windows(align(s, (1.0, 0.0, 0.0)), 24, 24, 24)
    i = int(np.flatnonzero(s.timestamps == ws.origins[0])[0])
    np.testing.assert_array_equal(ws.history[0], s.values[i - 287:i + 1])
    np.testing.assert_array_equal(ws.target[0], s.values[i + 1:i + 289])


def test_stats_depend_on_train_only():
    s = hourly_series(10)
    t = RawSeries(s.timestamps, s.values.copy(), s.resolution, s.exog.copy(), s.exog_names, s.name)
    t.values[-500:] += 1000.0
    a, b = align(s), align(t)
    assert a.target_stats.mean == b.target_stats.mean and a.target_stats.std == b.target_stats.std


def test_bad_split_fractions():
    with pytest.raises(DataError):
        align(hourly_series(2), (0.5, 0.2, 0.2))


# ---- synthetic generators

def test_toy_origin_and_peaks():
    t, y = synthesize_toy(SyntheticSpec(kind="toy", duration=2 * np.pi * 8, resolution=64 / (2 * np.pi)))
    assert y[0] == 0
    spec = dft_amplitudes(y, resolution=64 / (2 * np.pi))
    omega = 2 * np.pi * spec.freqs
    amp = {w: spec.amplitudes[np.argmin(np.abs(omega - w))] for w in (1, 2, 12)}
    assert amp[1] == pytest.approx(1.0, rel=1e-6)
    assert amp[2] == pytest.approx(1.0, rel=1e-6)
    assert amp[12] == pytest.approx(0.5, rel=1e-6)


def test_toy_noise_is_seeded():
    a = synthesize_toy(SyntheticSpec(kind="toy", duration=10, resolution=10, noise=0.1, seed=3))[1]
    b = synthesize_toy(SyntheticSpec(kind="toy", duration=10, resolution=10, noise=0.1, seed=3))[1]
    c = synthesize_toy(SyntheticSpec(kind="toy", duration=10, resolution=10, noise=0.1, seed=4))[1]
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_load_peak_at_one_cycle_per_day():
    s = synthesize_energy(SyntheticSpec(duration=28, seed=2))["load"]
    spec = dft_amplitudes(s.values - s.values.mean(), resolution=12.0)
    k = np.argmax(spec.amplitudes[1:]) + 1
    assert spec.freqs[k] * 24 == pytest.approx(1.0)


def test_wind_bounded():
    spec = SyntheticSpec(duration=20, seed=5)
    w = synthesize_energy(spec)["wind"].values
    assert w.min() >= 0 and w.max() <= spec.wind_capacity


def test_synthetic_csv_reproducible():
    a = synthesize_energy(SyntheticSpec(duration=3, seed=9))
    b = synthesize_energy(SyntheticSpec(duration=3, seed=9))
    c = synthesize_energy(SyntheticSpec(duration=3, seed=10))
    assert a["load"].to_csv() == b["load"].to_csv()
    assert a["wind"].to_csv() != c["wind"].to_csv()
