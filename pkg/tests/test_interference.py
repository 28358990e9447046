import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from btmesh.interference import (
    Hotspot,
    InterferenceMap,
    Interpolation,
    MissingData,
    RawInterferenceRecord,
    adapt_power,
    build_map,
    generate_synthetic_map,
    ieee154_center_frequency_mhz,
    load_map,
    map_channel,
    query,
    read_records,
    save_map,
    write_records,
)
from btmesh.radio import ADV_CHANNELS, AdvChannel, ble_center_frequency_mhz, dbm_to_mw, mw_to_dbm

# decimal dB values are not exact binary fractions, so "exact" means equal to
# within a few ulps of the operands
DB_EXACT = 1e-12


def _records(channel_154, samples, window=(0.0, 10.0)):
    return [RawInterferenceRecord(window[0], window[1], channel_154, pos, p) for pos, p in samples]


def _all_channels(samples, window=(0.0, 10.0)):
    return [r for ch in (11, 15, 26) for r in _records(ch, samples, window)]


# -- channel mapping ---------------------------------------------------------

@pytest.mark.parametrize("ble, expected", [(37, 11), (38, 15), (39, 26)])
def test_map_channel_examples(ble, expected):
    assert map_channel(ble) == expected
    assert map_channel(AdvChannel(ble)) == expected


def test_map_channel_total_over_all_ble_channels():
    image = {map_channel(ch) for ch in range(40)}
    assert image <= set(range(11, 27))
    for ch in range(40):
        f = ble_center_frequency_mhz(ch)
        best = min(abs(ieee154_center_frequency_mhz(c) - f) for c in range(11, 27))
        assert abs(ieee154_center_frequency_mhz(map_channel(ch)) - f) == best


def test_ieee154_frequencies():
    assert ieee154_center_frequency_mhz(11) == 2405.0
    assert ieee154_center_frequency_mhz(26) == 2480.0
    with pytest.raises(ValueError):
        ieee154_center_frequency_mhz(27)


# -- power adaptation --------------------------------------------------------

def test_adapt_power_examples():
    assert adapt_power(-40.0, -6.02) == pytest.approx(-46.02, abs=DB_EXACT)
    assert adapt_power(-40.0, 0.0) == -40.0
    assert adapt_power(-40.0) == pytest.approx(-46.02, abs=DB_EXACT)


def test_adapt_power_linear_quarter():
    assert dbm_to_mw(adapt_power(-40.0, -6.02)) == pytest.approx(0.25 * dbm_to_mw(-40.0), rel=1e-3)


@given(
    p=st.floats(min_value=-200.0, max_value=30.0),
    r=st.floats(min_value=-30.0, max_value=30.0),
)
def test_adapt_power_is_pure_shift(p, r):
    assert adapt_power(p, r) == p + r
    assert adapt_power(p, r) - p == pytest.approx(r, abs=4 * math.ulp(max(abs(p), abs(r), 1.0)))


# -- build_map ---------------------------------------------------------------

def test_single_observer_nearest():
    imap = build_map(_all_channels([((0.0, 0.0), -50.0)]), [(0.0, 10.0)], Interpolation.NEAREST)
    got = mw_to_dbm(query(imap, 5.0, AdvChannel.CH37, (10.0, 10.0)))
    assert got == pytest.approx(-56.02, abs=DB_EXACT)


def test_equal_power_idw_is_constant():
    imap = build_map(_all_channels([((0.0, 0.0), -50.0), ((20.0, 0.0), -50.0)]), [(0.0, 10.0)])
    expected = dbm_to_mw(-56.02)
    for pos in [(3.0, 4.0), (10.0, 0.0), (-7.0, 30.0)]:
        assert query(imap, 1.0, AdvChannel.CH38, pos) == pytest.approx(expected, rel=1e-12)


def test_idw_equal_distance_is_linear_mean():
    imap = build_map(_all_channels([((-1.0, 0.0), -40.0), ((1.0, 0.0), -60.0)]), [(0.0, 10.0)])
    expected = 0.5 * (dbm_to_mw(-46.02) + dbm_to_mw(-66.02))
    assert query(imap, 1.0, AdvChannel.CH39, (0.0, 0.0)) == pytest.approx(expected, rel=1e-12)


def test_repeated_observations_average_in_linear_power():
    recs = _all_channels([((0.0, 0.0), -40.0), ((0.0, 0.0), -50.0)])
    imap = build_map(recs, [(0.0, 10.0)], bandwidth_ratio_db=0.0)
    expected = 0.5 * (dbm_to_mw(-40.0) + dbm_to_mw(-50.0))
    assert query(imap, 1.0, AdvChannel.CH37, (3.0, 3.0)) == pytest.approx(expected, rel=1e-12)


_coords = st.floats(min_value=-50.0, max_value=50.0, allow_nan=False)


@settings(max_examples=200)
@given(
    samples=st.lists(
        st.tuples(st.tuples(_coords, _coords), st.floats(min_value=-100.0, max_value=-20.0)),
        min_size=1,
        max_size=8,
        unique_by=lambda s: s[0],
    ),
    mode=st.sampled_from(list(Interpolation)),
    exponent=st.floats(min_value=1.0, max_value=4.0),
)
def test_interpolation_exact_at_samples(samples, mode, exponent):
    imap = build_map(_all_channels(samples), [(0.0, 10.0)], mode, exponent)
    for pos, p in samples:
        for ch in ADV_CHANNELS:
            assert mw_to_dbm(query(imap, 0.0, ch, pos)) == pytest.approx(adapt_power(p), abs=1e-9)


@settings(max_examples=100)
@given(
    x=st.floats(min_value=-20.0, max_value=20.0),
    y=st.floats(min_value=-20.0, max_value=20.0),
)
def test_idw_bounded_by_sample_extremes(x, y):
    imap = build_map(_all_channels([((0.0, 0.0), -40.0), ((5.0, 5.0), -70.0), ((-3.0, 8.0), -55.0)], (0.0, 1.0)), [(0.0, 1.0)])
    v = query(imap, 0.5, AdvChannel.CH37, (x, y))
    assert dbm_to_mw(-76.02) * (1 - 1e-12) <= v <= dbm_to_mw(-46.02) * (1 + 1e-12)


def test_missing_channel_raises_named_gap():
    recs = _records(11, [((0.0, 0.0), -50.0)]) + _records(15, [((0.0, 0.0), -50.0)])
    with pytest.raises(MissingData, match="channel 26"):
        build_map(recs, [(0.0, 10.0)])


def test_missing_window_raises():
    with pytest.raises(MissingData, match="window 1"):
        build_map(_all_channels([((0.0, 0.0), -50.0)]), [(0.0, 10.0), (10.0, 20.0)])


def test_unrequired_channel_yields_empty_field():
    recs = _records(11, [((0.0, 0.0), -50.0)])
    imap = build_map(recs, [(0.0, 10.0)], channels=[AdvChannel.CH37])
    assert query(imap, 1.0, AdvChannel.CH38, (0.0, 0.0)) == 0.0


def test_no_interference_record_gives_zero():
    imap = build_map(_all_channels([((0.0, 0.0), -math.inf)]), [(0.0, 10.0)])
    assert query(imap, 1.0, AdvChannel.CH37, (4.0, 4.0)) == 0.0


def test_query_outside_windows_rejected():
    imap = build_map(_all_channels([((0.0, 0.0), -50.0)]), [(0.0, 10.0)])
    with pytest.raises(ValueError):
        query(imap, 10.0, AdvChannel.CH37, (0.0, 0.0))


def test_record_validation():
    with pytest.raises(ValueError):
        RawInterferenceRecord(0.0, 10.0, 27, (0.0, 0.0), -50.0)
    with pytest.raises(ValueError):
        RawInterferenceRecord(10.0, 10.0, 11, (0.0, 0.0), -50.0)


def test_four_window_ordering_at_fixed_point():
    windows = [(25200, 36000), (36000, 50400), (50400, 61200), (61200, 72000)]
    levels = [-80.0, -70.0, -55.0, -65.0]
    recs = []
    for (a, b), p in zip(windows, levels):
        recs += _all_channels([((0.0, 0.0), p), ((10.0, 0.0), p - 5)], (a, b))
    imap = build_map(recs, windows)
    at = [query(imap, 0.5 * (a + b), AdvChannel.CH37, (4.0, 1.0)) for a, b in windows]
    assert at[0] < at[1] < at[3] < at[2]


# -- synthetic maps ----------------------------------------------------------

def test_synthetic_single_hotspot_peak():
    imap = generate_synthetic_map([Hotspot((0.0, 0.0), -30.0, 2.0)])
    assert mw_to_dbm(query(imap, 0.0, AdvChannel.CH37, (0.0, 0.0))) == pytest.approx(-30.0, abs=DB_EXACT)
    assert mw_to_dbm(query(imap, 0.0, AdvChannel.CH37, (5.0, 0.0))) == pytest.approx(-40.0, abs=1e-9)


def test_synthetic_no_hotspots_is_silent():
    imap = generate_synthetic_map([])
    for ch in ADV_CHANNELS:
        assert query(imap, 0.0, ch, (1.0, 2.0)) == 0.0


def test_synthetic_disjoint_hotspots_dominate_their_centers():
    a = Hotspot((0.0, 0.0), -30.0, 3.0)
    b = Hotspot((50.0, 0.0), -40.0, 3.0)
    imap = generate_synthetic_map([a, b])
    at_a = query(imap, 0.0, AdvChannel.CH38, a.center)
    at_b = query(imap, 0.0, AdvChannel.CH38, b.center)
    assert at_a == pytest.approx(dbm_to_mw(-30.0), rel=1e-6)
    assert at_b == pytest.approx(dbm_to_mw(-40.0), rel=1e-6)


def test_synthetic_channel_tag_limits_hotspot():
    imap = generate_synthetic_map([Hotspot((0.0, 0.0), -30.0, 1.0, channel_154=11)])
    assert query(imap, 0.0, AdvChannel.CH37, (0.0, 0.0)) > 0.0
    assert query(imap, 0.0, AdvChannel.CH38, (0.0, 0.0)) == 0.0
    assert query(imap, 0.0, AdvChannel.CH39, (0.0, 0.0)) == 0.0


def test_synthetic_window_gains():
    imap = generate_synthetic_map([Hotspot((0.0, 0.0), -30.0, 1.0)], [(0, 10), (10, 20)], [0.0, -10.0])
    assert mw_to_dbm(query(imap, 15.0, AdvChannel.CH37, (0.0, 0.0))) == pytest.approx(-40.0, abs=1e-9)
    with pytest.raises(ValueError):
        generate_synthetic_map([], [(0, 10)], [0.0, 1.0])


# -- serialization -----------------------------------------------------------

def test_map_round_trip_preserves_queries(tmp_path):
    recs = _all_channels([((0.0, 0.0), -50.0), ((10.0, 3.0), -65.0), ((4.0, 9.0), -math.inf)])
    for imap in (
        build_map(recs, [(0.0, 10.0)], duty_cycle=[0.5]),
        generate_synthetic_map([Hotspot((2.0, 2.0), -35.0, 1.5, 15)], [(0, 5), (5, 10)], [0.0, -3.0]),
    ):
        path = tmp_path / "map.json"
        save_map(imap, path)
        again = load_map(path)
        assert again.duty_cycle == imap.duty_cycle
        for t in (1.0, 7.0):
            for ch in ADV_CHANNELS:
                for pos in [(0.0, 0.0), (3.3, 7.1)]:
                    assert query(again, t, ch, pos) == pytest.approx(query(imap, t, ch, pos), rel=1e-12)


def test_map_rejects_unknown_version():
    data = generate_synthetic_map([]).to_dict()
    data["format_version"] = 99
    with pytest.raises(ValueError):
        InterferenceMap.from_dict(data)


def test_records_round_trip(tmp_path):
    recs = _records(11, [((0.0, 1.5), -50.25), ((2.0, 3.0), -math.inf)])
    path = tmp_path / "rec.csv"
    write_records(path, recs)
    assert read_records(path) == recs


def test_records_reject_bad_header_and_rows(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b,c\n")
    with pytest.raises(ValueError, match="header"):
        read_records(path)
    path.write_text("window_start_s,window_end_s,channel_154,x_m,y_m,power_dbm\n0,10,11,0,0\n")
    with pytest.raises(ValueError, match=":2:"):
        read_records(path)
