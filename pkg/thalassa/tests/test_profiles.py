# thalassa/tests/test_profiles.py - Profile ingestion, regridding, filtering, cropping, RMS error

import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from thalassa.errors import (
    EmptyProfileSetError,
    GridError,
    GridMismatchError,
    ProfileParseError,
    ProfileValidationError,
)
from thalassa.profiles import (
    BoundingBox,
    DepthGrid,
    ProfileMeta,
    ProfileSet,
    SoundSpeedProfile,
    crop_depth,
    filter_profiles,
    parse_profiles,
    parse_profiles_report,
    profiles_from_text,
    regrid_profile,
    rms_error,
    write_profiles,
)

HEADER = "lat,lon,year,month,day,depth_m,speed_mps\n"


def _csv(*records):
    """records: (lat, lon, year, month, day, [(depth, speed), ...])"""
    lines = [HEADER]
    for lat, lon, year, month, day, samples in records:
        for depth, speed in samples:
            lines.append(f"{lat},{lon},{year},{month},{day},{depth},{speed}\n")
    return "".join(lines)


def _profile(grid, speeds, **meta):
    return SoundSpeedProfile(grid, np.asarray(speeds, dtype=float), ProfileMeta(**meta))


# --- DepthGrid ---

def test_depth_grid_layout():
    grid = DepthGrid.from_max_depth(300.0, 2.0)
    assert grid.count == 151
    assert grid.depths[0] == 0.0 and grid.depths[-1] == 300.0
    assert np.all(np.diff(grid.depths) > 0)


@pytest.mark.parametrize("count, spacing", [(1, 2.0), (10, 0.0), (10, -1.0)])
def test_depth_grid_rejects_degenerate(count, spacing):
    with pytest.raises(GridError):
        DepthGrid(count, spacing)


def test_depth_grid_rejects_off_grid_max_depth():
    with pytest.raises(GridError):
        DepthGrid.from_max_depth(301.0, 2.0)


# --- parse_profiles ---

def test_parse_on_grid_samples_is_identity():
    grid = DepthGrid.from_max_depth(20.0, 10.0)
    text = _csv((60.0, 3.0, 1995, 4, 1, [(0, 1500.0), (10, 1502.5), (20, 1507.25)]))
    profiles = profiles_from_text(text, grid)

    assert len(profiles) == 1
    np.testing.assert_array_equal(profiles[0].speeds, [1500.0, 1502.5, 1507.25])
    assert profiles[0].meta.year == 1995 and profiles[0].meta.month == 4


def test_parse_constant_record():
    grid = DepthGrid.from_max_depth(20.0, 5.0)
    text = _csv((60.0, 3.0, 1995, 4, 1, [(0, 1500), (20, 1500)]))
    np.testing.assert_array_equal(profiles_from_text(text, grid)[0].speeds, np.full(5, 1500.0))


def test_parse_interpolates_between_samples():
    grid = DepthGrid.from_max_depth(20.0, 5.0)
    text = _csv((60.0, 3.0, 1995, 4, 1, [(0, 1500), (10, 1510), (20, 1520)]))
    speeds = profiles_from_text(text, grid)[0].speeds
    assert speeds[1] == pytest.approx(1505.0, abs=1e-12)
    np.testing.assert_allclose(speeds, [1500, 1505, 1510, 1515, 1520])


def test_parse_preserves_record_order_and_accepts_bytes():
    grid = DepthGrid.from_max_depth(10.0, 5.0)
    text = _csv(
        (61.0, 4.0, 2003, 4, 2, [(0, 1490), (10, 1495)]),
        (60.0, 3.0, 1995, 4, 1, [(0, 1500), (10, 1505)]),
    )
    profiles = parse_profiles(io.BytesIO(text.encode("utf-8")), grid)
    assert [p.meta.year for p in profiles] == [2003, 1995]


def test_parse_rejects_bad_records_individually():
    grid = DepthGrid.from_max_depth(10.0, 5.0)
    text = _csv(
        (60.0, 3.0, 1995, 4, 1, [(0, 1500), (10, 1505)]),
        (60.5, 3.0, 1996, 4, 1, [(10, 1500), (0, 1505)]),     # depths decreasing
        (61.0, 3.0, 1997, 4, 1, [(0, 1500), (10, 1900)]),     # outside the plausibility band
    )
    profiles, rejected = parse_profiles_report(io.StringIO(text), grid)

    assert len(profiles) == 1, "Only the valid record should survive"
    assert [r.line for r in rejected] == [4, 6]
    assert "increasing" in rejected[0].reason
    assert "plausibility" in rejected[1].reason


def test_parse_malformed_header_reports_line():
    with pytest.raises(ProfileParseError) as info:
        profiles_from_text("lat,lon,when\n1,2,3\n", DepthGrid(3, 1.0))
    assert info.value.line == 1


def test_parse_unparseable_value_reports_line():
    grid = DepthGrid.from_max_depth(10.0, 5.0)
    text = HEADER + "60,3,1995,4,1,0,1500\n60,3,1995,4,1,10,fast\n"
    with pytest.raises(ProfileParseError) as info:
        profiles_from_text(text, grid)
    assert info.value.line == 3


@pytest.mark.parametrize("text", ["", HEADER])
def test_parse_empty_file(text):
    with pytest.raises(EmptyProfileSetError):
        profiles_from_text(text, DepthGrid(3, 1.0))


def test_write_then_parse_reproduces_profiles(small_grid, rng):
    profiles = ProfileSet(small_grid, tuple(
        _profile(small_grid, 1500 + rng.normal(size=small_grid.count),
                 latitude=60.0 + n, longitude=3.0, year=1990 + n, month=4, day=1)
        for n in range(3)
    ))
    buffer = io.StringIO()
    write_profiles(profiles, buffer)
    again = profiles_from_text(buffer.getvalue(), small_grid)

    assert len(again) == 3
    for a, b in zip(profiles, again):
        np.testing.assert_allclose(a.speeds, b.speeds, rtol=1e-9)
        assert a.meta.key == b.meta.key


# --- regrid_profile ---

def test_regrid_midpoint():
    grid = DepthGrid.from_max_depth(300.0, 2.0)
    profile = regrid_profile([(0.0, 1480.0), (300.0, 1520.0)], grid)
    assert profile.speeds[75] == pytest.approx(1500.0, abs=1e-9)


def test_regrid_holds_deepest_value_below_last_sample():
    grid = DepthGrid.from_max_depth(300.0, 2.0)
    profile = regrid_profile([(0.0, 1480.0), (100.0, 1490.0), (250.0, 1505.0)], grid)
    assert np.all(profile.speeds[grid.depths >= 250.0] == 1505.0)


def test_regrid_holds_shallowest_value_above_first_sample():
    grid = DepthGrid.from_max_depth(50.0, 5.0)
    profile = regrid_profile([(20.0, 1490.0), (50.0, 1500.0)], grid)
    assert np.all(profile.speeds[:5] == 1490.0)


@pytest.mark.parametrize("samples", [
    [(0.0, 1500.0)],
    [(0.0, 1500.0), (0.0, 1501.0)],
    [(10.0, 1500.0), (0.0, 1501.0)],
])
def test_regrid_rejects_bad_samples(samples):
    with pytest.raises(ProfileValidationError):
        regrid_profile(samples, DepthGrid(3, 5.0))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(1400.0, 1600.0), min_size=3, max_size=40))
def test_regrid_is_idempotent(speeds):
    grid = DepthGrid(len(speeds), 2.5)
    profile = regrid_profile(list(zip(grid.depths, speeds)), grid)
    again = regrid_profile(list(zip(grid.depths, profile.speeds)), grid)
    np.testing.assert_allclose(again.speeds, profile.speeds, atol=1e-9)


def test_index_of_finds_the_first_matching_id(small_grid):
    profiles = ProfileSet(small_grid, tuple(
        _profile(small_grid, np.full(small_grid.count, 1500.0), profile_id=pid) for pid in ("a", "b", "b")
    ))
    assert profiles.index_of("b") == 1
    with pytest.raises(KeyError):
        profiles.index_of("c")


# --- filter_profiles ---

def _meta_set(grid):
    rows = [
        (60.0, 3.0, 1995, 4),     # in
        (59.849, 4.990, 1990, 4), # in: box corner, first year
        (62.092, 2.924, 2000, 4), # in: opposite corner, last year
        (63.0, 3.0, 1995, 4),     # out: latitude
        (60.0, 3.0, 1995, 5),     # out: month
    ]
    return ProfileSet(grid, tuple(
        _profile(grid, np.full(grid.count, 1500.0 + n), latitude=lat, longitude=lon, year=y, month=m, day=1)
        for n, (lat, lon, y, m) in enumerate(rows)
    ))


def test_filter_keeps_matching_profiles_with_inclusive_bounds(small_grid):
    box = BoundingBox(59.849, 62.092, 2.924, 4.990)
    kept = filter_profiles(_meta_set(small_grid), box, {4}, (1990, 2000))
    assert [p.speeds[0] for p in kept] == [1500.0, 1501.0, 1502.0]


def test_filter_identity_and_disjoint(small_grid):
    profiles = _meta_set(small_grid)
    everything = filter_profiles(profiles, BoundingBox(-90, 90, -180, 180), range(1, 13), (0, 9999))
    assert len(everything) == len(profiles)
    nothing = filter_profiles(profiles, BoundingBox(10, 20, 10, 20), range(1, 13), (0, 9999))
    assert len(nothing) == 0


@settings(max_examples=30, deadline=None)
@given(
    st.floats(59.0, 61.0), st.floats(0.1, 3.0),
    st.sets(st.integers(1, 12), min_size=1),
    st.integers(1985, 2000), st.integers(0, 10),
)
def test_filter_is_idempotent(lat0, height, months, first_year, span):
    grid = DepthGrid(3, 5.0)
    profiles = _meta_set(grid)
    box = BoundingBox(lat0, lat0 + height, 2.0, 5.0)
    once = filter_profiles(profiles, box, months, (first_year, first_year + span))
    twice = filter_profiles(once, box, months, (first_year, first_year + span))
    assert [p.meta for p in once] == [p.meta for p in twice]


def test_bounding_box_validates_order():
    with pytest.raises(ProfileValidationError):
        BoundingBox(62.0, 60.0, 3.0, 4.0)


# --- crop_depth ---

def test_crop_counts_grid_points():
    grid = DepthGrid.from_max_depth(600.0, 10.0)
    profiles = ProfileSet(grid, (_profile(grid, np.linspace(1480, 1520, grid.count)),))
    cropped = crop_depth(profiles, 300.0)

    assert grid.count == 61 and cropped.grid.count == 31
    np.testing.assert_array_equal(cropped[0].speeds, profiles[0].speeds[:31])


def test_crop_to_grid_bottom_is_identity(small_grid):
    profiles = ProfileSet(small_grid, (_profile(small_grid, np.full(small_grid.count, 1500.0)),))
    cropped = crop_depth(profiles, small_grid.max_depth)
    assert cropped.grid == small_grid
    np.testing.assert_array_equal(cropped[0].speeds, profiles[0].speeds)


@pytest.mark.parametrize("depth", [0.0, 12.5, 200.0])
def test_crop_rejects_unrepresentable_depth(small_grid, depth):
    with pytest.raises(GridError):
        crop_depth(ProfileSet(small_grid), depth)


# --- rms_error ---

def test_rms_error_examples():
    grid = DepthGrid(2, 1.0)
    a = _profile(grid, [1503.0, 1504.0])
    b = _profile(grid, [1500.0, 1500.0])
    assert rms_error(a, a) == 0.0
    assert rms_error(a, b) == pytest.approx(np.sqrt(12.5), rel=1e-12)
    shifted = _profile(grid, a.speeds + 2.0)
    assert rms_error(a, shifted) == pytest.approx(2.0, rel=1e-12)


def test_rms_error_grid_mismatch():
    with pytest.raises(GridMismatchError):
        rms_error(_profile(DepthGrid(2, 1.0), [1500, 1500]), _profile(DepthGrid(3, 1.0), [1500] * 3))


profile_speeds = st.lists(st.floats(1300.0, 1700.0), min_size=5, max_size=5)


@settings(max_examples=100, deadline=None)
@given(profile_speeds, profile_speeds, profile_speeds)
def test_rms_error_is_a_metric(x, y, z):
    grid = DepthGrid(5, 2.0)
    a, b, c = (_profile(grid, s) for s in (x, y, z))
    assert rms_error(a, b) == pytest.approx(rms_error(b, a), abs=1e-12)
    assert rms_error(a, c) <= rms_error(a, b) + rms_error(b, c) + 1e-9
