# thalassa/profiles.py - Sound speed profile ingestion, regridding and dataset filtering

"""
Profiles
========
The common depth grid, the sound speed profile record and the dataset
operations applied before any EOF work:

- CSV ingestion with per-record error reporting
- Linear regridding with constant extrapolation
- Bounding box / month / year filtering
- Depth cropping
- RMS comparison of two profiles
"""

import io
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Iterator, List, Optional, Sequence, Set, Tuple, Union

import numpy as np
import pandas as pd
from loguru import logger

from thalassa.errors import (
    EmptyProfileSetError,
    GridError,
    GridMismatchError,
    ProfileParseError,
    ProfileValidationError,
)

CSV_COLUMNS = ["lat", "lon", "year", "month", "day", "depth_m", "speed_mps"]
DEFAULT_SPEED_BAND = (1300.0, 1700.0)
GRID_TOLERANCE_M = 1e-9


@dataclass(frozen=True)
class DepthGrid:
    """Uniform depth grid starting at the surface: depths[i] = i * spacing"""
    count: int
    spacing: float

    def __post_init__(self):
        if int(self.count) != self.count or self.count < 2:
            raise GridError(f"depth grid needs at least 2 points, got {self.count}")
        if not (math.isfinite(self.spacing) and self.spacing > 0):
            raise GridError(f"depth spacing must be positive, got {self.spacing}")
        object.__setattr__(self, "count", int(self.count))
        object.__setattr__(self, "spacing", float(self.spacing))

    @classmethod
    def from_max_depth(cls, max_depth: float, spacing: float) -> "DepthGrid":
        steps = max_depth / spacing
        if abs(steps - round(steps)) * spacing > GRID_TOLERANCE_M:
            raise GridError(f"max depth {max_depth} m is not a multiple of {spacing} m")
        return cls(count=int(round(steps)) + 1, spacing=spacing)

    @property
    def depths(self) -> np.ndarray:
        return np.arange(self.count, dtype=float) * self.spacing

    @property
    def max_depth(self) -> float:
        return (self.count - 1) * self.spacing


@dataclass(frozen=True)
class ProfileMeta:
    latitude: float = float("nan")
    longitude: float = float("nan")
    year: int = 0
    month: int = 0
    day: int = 0
    synthetic: bool = False
    profile_id: str = ""

    @property
    def key(self) -> Tuple[float, float, int, int, int]:
        return (self.latitude, self.longitude, self.year, self.month, self.day)


@dataclass(frozen=True)
class SoundSpeedProfile:
    """Sound speed (m/s) sampled on a DepthGrid"""
    grid: DepthGrid
    speeds: np.ndarray
    meta: ProfileMeta = field(default_factory=ProfileMeta)

    def __post_init__(self):
        speeds = np.array(self.speeds, dtype=float)
        if speeds.ndim != 1 or speeds.shape[0] != self.grid.count:
            raise ProfileValidationError(
                f"profile has {speeds.size} speeds for a {self.grid.count}-point grid"
            )
        if not np.all(np.isfinite(speeds)):
            raise ProfileValidationError("profile speeds must be finite")
        speeds.setflags(write=False)
        object.__setattr__(self, "speeds", speeds)

    def check_band(self, band: Tuple[float, float] = DEFAULT_SPEED_BAND) -> None:
        """Raise ProfileValidationError if any speed lies outside the plausibility band"""
        low, high = band
        bad = (self.speeds < low) | (self.speeds > high)
        if np.any(bad):
            idx = int(np.argmax(bad))
            raise ProfileValidationError(
                f"speed {self.speeds[idx]:.3f} m/s at {self.grid.depths[idx]:g} m "
                f"outside plausibility band [{low:g}, {high:g}]"
            )


@dataclass(frozen=True)
class ProfileSet:
    """Ordered profiles sharing one grid. May be empty (e.g. after filtering)."""
    grid: DepthGrid
    profiles: Tuple[SoundSpeedProfile, ...] = ()

    def __post_init__(self):
        profiles = tuple(self.profiles)
        for p in profiles:
            if p.grid != self.grid:
                raise GridMismatchError(
                    f"profile {p.meta.profile_id or '?'} is on {p.grid}, set grid is {self.grid}"
                )
        object.__setattr__(self, "profiles", profiles)

    def __len__(self) -> int:
        return len(self.profiles)

    def __iter__(self) -> Iterator[SoundSpeedProfile]:
        return iter(self.profiles)

    def __getitem__(self, idx: int) -> SoundSpeedProfile:
        return self.profiles[idx]

    def require_nonempty(self, what: str = "profile set") -> None:
        if not self.profiles:
            raise EmptyProfileSetError(f"{what} is empty")

    def speed_matrix(self) -> np.ndarray:
        """K x N matrix, one column per profile"""
        self.require_nonempty()
        return np.column_stack([p.speeds for p in self.profiles])

    def mean_profile(self) -> SoundSpeedProfile:
        return SoundSpeedProfile(
            self.grid,
            self.speed_matrix().mean(axis=1),
            ProfileMeta(synthetic=True, profile_id="mean"),
        )

    def index_of(self, profile_id: str) -> int:
        """Position of the first profile with this id"""
        for idx, p in enumerate(self.profiles):
            if p.meta.profile_id == profile_id:
                return idx
        raise KeyError(profile_id)


@dataclass(frozen=True)
class BoundingBox:
    lat_min: float
    lat_max: float
    lon_min: float
    lon_max: float

    def __post_init__(self):
        if not self.lat_min < self.lat_max:
            raise ProfileValidationError("bounding box needs lat_min < lat_max")
        if not self.lon_min < self.lon_max:
            raise ProfileValidationError("bounding box needs lon_min < lon_max")

    def contains(self, latitude: float, longitude: float) -> bool:
        # closed intervals
        return (self.lat_min <= latitude <= self.lat_max
                and self.lon_min <= longitude <= self.lon_max)


@dataclass
class RecordError:
    """One rejected record from a profile CSV"""
    line: int
    profile_key: Tuple
    reason: str


# ---------------------------------------------------------------------------
# Regridding
# ---------------------------------------------------------------------------

def regrid_profile(
    samples: Sequence[Tuple[float, float]],
    grid: DepthGrid,
    meta: Optional[ProfileMeta] = None,
) -> SoundSpeedProfile:
    """
    Interpolate (depth, speed) samples onto the grid.

    Linear between samples; above the shallowest and below the deepest sample
    the nearest sample value is held constant.
    """
    arr = np.asarray(samples, dtype=float)
    if arr.ndim != 2 or arr.shape[0] < 2 or arr.shape[1] != 2:
        raise ProfileValidationError("regridding needs at least 2 (depth, speed) samples")
    depths, speeds = arr[:, 0], arr[:, 1]
    if not (np.all(np.isfinite(depths)) and np.all(np.isfinite(speeds))):
        raise ProfileValidationError("non-finite sample")
    steps = np.diff(depths)
    if np.any(steps == 0):
        raise ProfileValidationError("duplicate sample depths")
    if np.any(steps < 0):
        raise ProfileValidationError("sample depths must be strictly increasing")

    # np.interp holds the end values constant outside [depths[0], depths[-1]]
    values = np.interp(grid.depths, depths, speeds)
    return SoundSpeedProfile(grid, values, meta or ProfileMeta())


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------

_PANDAS_LINE = re.compile(r"line (\d+)")


def _read_frame(source: Union[str, Path, IO[bytes], IO[str]]) -> pd.DataFrame:
    try:
        frame = pd.read_csv(
            source,
            dtype=str,
            keep_default_na=False,
            skip_blank_lines=True,
            comment="#",
            encoding="utf-8",
        )
    except pd.errors.EmptyDataError as e:
        raise EmptyProfileSetError("profile file is empty") from e
    except pd.errors.ParserError as e:
        match = _PANDAS_LINE.search(str(e))
        raise ProfileParseError(f"malformed row ({e})", int(match.group(1)) if match else None) from e

    header = [c.strip() for c in frame.columns]
    if header != CSV_COLUMNS:
        raise ProfileParseError(
            f"expected header {','.join(CSV_COLUMNS)}, got {','.join(header)}", line=1
        )
    frame.columns = header
    if frame.empty:
        raise EmptyProfileSetError("profile file has a header but no rows")
    return frame


def _numeric(frame: pd.DataFrame) -> pd.DataFrame:
    numeric = frame.apply(lambda col: pd.to_numeric(col.str.strip(), errors="coerce"))
    bad_rows = numeric.isna().any(axis=1) | ~np.isfinite(numeric.to_numpy(dtype=float)).all(axis=1)
    if bad_rows.any():
        row = int(np.argmax(bad_rows.to_numpy()))
        raise ProfileParseError(
            f"unparseable value in row {frame.iloc[row].to_dict()}",
            line=row + 2,  # header is line 1
        )
    return numeric


def parse_profiles_report(
    source: Union[str, Path, IO[bytes], IO[str]],
    grid: DepthGrid,
    band: Tuple[float, float] = DEFAULT_SPEED_BAND,
) -> Tuple[ProfileSet, List[RecordError]]:
    """
    Parse a profile CSV into a ProfileSet plus the list of rejected records.

    Rows of one profile are contiguous and share (lat, lon, year, month, day).
    Malformed rows abort the parse; records that parse but violate profile
    invariants are rejected individually.
    """
    frame = _numeric(_read_frame(source))
    keys = frame[["lat", "lon", "year", "month", "day"]].to_numpy()
    starts = np.flatnonzero(np.r_[True, np.any(keys[1:] != keys[:-1], axis=1)])
    ends = np.r_[starts[1:], len(frame)]

    profiles: List[SoundSpeedProfile] = []
    rejected: List[RecordError] = []
    for start, end in zip(starts, ends):
        lat, lon, year, month, day = keys[start]
        line = int(start) + 2
        key = (float(lat), float(lon), int(year), int(month), int(day))
        try:
            if year != int(year) or month != int(month) or day != int(day):
                raise ProfileValidationError("year, month and day must be integers")
            if not 1 <= month <= 12:
                raise ProfileValidationError(f"month {int(month)} outside 1..12")
            meta = ProfileMeta(
                latitude=float(lat),
                longitude=float(lon),
                year=int(year),
                month=int(month),
                day=int(day),
                profile_id=f"{lat:.5f}_{lon:.5f}_{int(year):04d}-{int(month):02d}-{int(day):02d}",
            )
            block = frame.iloc[start:end]
            samples = block[["depth_m", "speed_mps"]].to_numpy(dtype=float)
            if np.any(np.diff(samples[:, 0]) <= 0):
                raise ProfileValidationError("depth column is not strictly increasing")
            profile = regrid_profile(samples, grid, meta)
            profile.check_band(band)
        except ProfileValidationError as e:
            logger.warning(f"⚠️ Rejected profile record at line {line}: {e}")
            rejected.append(RecordError(line=line, profile_key=key, reason=str(e)))
            continue
        profiles.append(profile)

    logger.info(f"📥 Parsed {len(profiles)} profiles ({len(rejected)} rejected)")
    return ProfileSet(grid, tuple(profiles)), rejected


def parse_profiles(
    source: Union[str, Path, IO[bytes], IO[str]],
    grid: DepthGrid,
    band: Tuple[float, float] = DEFAULT_SPEED_BAND,
) -> ProfileSet:
    """Parse a profile CSV; rejected records are logged and dropped"""
    profiles, _ = parse_profiles_report(source, grid, band)
    return profiles


def profiles_to_frame(profile_set: ProfileSet) -> pd.DataFrame:
    depths = profile_set.grid.depths
    blocks = []
    for p in profile_set:
        m = p.meta
        blocks.append(pd.DataFrame({
            "lat": m.latitude,
            "lon": m.longitude,
            "year": m.year,
            "month": m.month,
            "day": m.day,
            "depth_m": depths,
            "speed_mps": p.speeds,
        }))
    if not blocks:
        return pd.DataFrame(columns=CSV_COLUMNS)
    return pd.concat(blocks, ignore_index=True)[CSV_COLUMNS]


def write_profiles(profile_set: ProfileSet, sink: Union[str, Path, IO[str]]) -> None:
    """Write a ProfileSet in the profile CSV format"""
    frame = profiles_to_frame(profile_set)
    text = frame.to_csv(index=False, float_format="%.10g", lineterminator="\n")
    if isinstance(sink, (str, Path)):
        Path(sink).write_text(text, encoding="utf-8", newline="\n")
    else:
        sink.write(text)


def profiles_from_text(text: str, grid: DepthGrid) -> ProfileSet:
    return parse_profiles(io.StringIO(text), grid)


# ---------------------------------------------------------------------------
# Dataset operations
# ---------------------------------------------------------------------------

def filter_profiles(
    profile_set: ProfileSet,
    box: BoundingBox,
    months: Iterable[int],
    years: Tuple[int, int],
) -> ProfileSet:
    """Keep profiles inside the box, in one of the months, within the inclusive year range"""
    month_set: Set[int] = set(int(m) for m in months)
    first_year, last_year = years
    kept = tuple(
        p for p in profile_set
        if box.contains(p.meta.latitude, p.meta.longitude)
        and p.meta.month in month_set
        and first_year <= p.meta.year <= last_year
    )
    logger.debug(f"Filter kept {len(kept)}/{len(profile_set)} profiles")
    return ProfileSet(profile_set.grid, kept)


def crop_depth(profile_set: ProfileSet, max_depth: float) -> ProfileSet:
    """Truncate every profile to [0, max_depth]"""
    grid = profile_set.grid
    steps = max_depth / grid.spacing
    n = int(round(steps))
    if abs(steps - n) * grid.spacing > GRID_TOLERANCE_M:
        raise GridError(f"crop depth {max_depth} m is not on the {grid.spacing} m grid")
    if n + 1 > grid.count:
        raise GridError(f"crop depth {max_depth} m is below the grid bottom {grid.max_depth} m")
    new_grid = DepthGrid(n + 1, grid.spacing)  # raises for fewer than 2 points
    cropped = tuple(
        SoundSpeedProfile(new_grid, p.speeds[: n + 1], p.meta) for p in profile_set
    )
    return ProfileSet(new_grid, cropped)


def rms_error(a: SoundSpeedProfile, b: SoundSpeedProfile) -> float:
    """Root-mean-square speed difference over the grid depths (m/s)"""
    if a.grid != b.grid:
        raise GridMismatchError(f"cannot compare profiles on {a.grid} and {b.grid}")
    diff = a.speeds - b.speeds
    return float(np.sqrt(np.mean(diff * diff)))
