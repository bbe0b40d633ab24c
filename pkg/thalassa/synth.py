# thalassa/synth.py - Synthetic oceans, MBES geometries and noisy travel-time measurements

"""
Synthetic data
==============
Stands in for the measured historical dataset and for real MBES pings:

- ``generate_ocean``: base profile shape (mixed layer, thermocline, deep
  gradient) plus random low-order cosine modes (the first a depth-uniform
  offset) and random metadata
- ``make_geometry``: uniform beam fan over the swath
- ``simulate_measurements``: exact forward times plus independent Gaussian
  travel-time noise, repeated over pings

Simulation and inversion share the forward model (inverse crime); the cosine
modes keep the truth profiles outside the span of a truncated EOF basis.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from loguru import logger
from pydantic import BaseModel, Field, field_validator, model_validator

from thalassa.errors import (
    EmptyMeasurementError,
    GeometryError,
    MeasurementError,
    MeasurementParseError,
    PersistenceError,
    ProfileValidationError,
    SynthSpecError,
)
from thalassa.forward import Geometry, LayeredRayTracer
from thalassa.profiles import (
    DEFAULT_SPEED_BAND,
    DepthGrid,
    ProfileMeta,
    ProfileSet,
    SoundSpeedProfile,
)

MEASUREMENT_FORMAT_VERSION = 1
MEASUREMENT_COLUMNS = ["ping", "angle_rad", "time_s"]
DEFAULT_C_REF = 1500.0


class SynthOceanSpec(BaseModel):
    """Parameters of the synthetic profile family"""

    surface_speed_mps: float = 1478.0
    mixed_layer_depth_m: float = 20.0
    thermocline_thickness_m: float = 60.0
    thermocline_gradient: float = 0.08     # (m/s)/m
    deep_gradient: float = 0.017           # (m/s)/m
    mode_amplitudes: List[float] = Field(
        default_factory=lambda: [3.0, 1.0, 0.6, 0.35, 0.2, 0.12, 0.08]
    )
    count: int = 1500
    lat_range: Tuple[float, float] = (59.5, 62.5)
    lon_range: Tuple[float, float] = (2.5, 5.5)
    year_range: Tuple[int, int] = (1990, 2010)
    months: List[int] = Field(default_factory=lambda: [3, 4, 5])
    speed_band: Tuple[float, float] = DEFAULT_SPEED_BAND

    @field_validator("count")
    @classmethod
    def _count(cls, v: int) -> int:
        if v < 2:
            raise ValueError("synthetic ocean needs at least 2 profiles")
        return v

    @field_validator("mode_amplitudes")
    @classmethod
    def _amplitudes(cls, v: List[float]) -> List[float]:
        if any(a < 0 for a in v):
            raise ValueError("mode amplitudes must be nonnegative")
        return v

    @field_validator("months")
    @classmethod
    def _months(cls, v: List[int]) -> List[int]:
        if not v or any(not 1 <= m <= 12 for m in v):
            raise ValueError("months must be a nonempty list of values in 1..12")
        return v

    @model_validator(mode="after")
    def _ranges(self) -> "SynthOceanSpec":
        for name in ("lat_range", "lon_range", "year_range", "speed_band"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} must be (low, high)")
        return self

    def base_shape(self, depths: np.ndarray) -> np.ndarray:
        """Deterministic profile: constant mixed layer, thermocline gradient, deep gradient"""
        mld = self.mixed_layer_depth_m
        tc_bottom = mld + self.thermocline_thickness_m
        in_thermocline = np.clip(depths, mld, tc_bottom) - mld
        below = np.clip(depths - tc_bottom, 0.0, None)
        return (self.surface_speed_mps
                + self.thermocline_gradient * in_thermocline
                + self.deep_gradient * below)


def cosine_modes(depths: np.ndarray, n_modes: int) -> np.ndarray:
    """K x M matrix of cos(m pi z / D), m = 0..M-1, D the grid bottom; column 0 is a uniform offset"""
    span = depths[-1] if depths[-1] > 0 else 1.0
    m = np.arange(n_modes)
    return np.cos(np.pi * np.outer(depths / span, m))


def generate_ocean(
    spec: SynthOceanSpec,
    rng: np.random.Generator,
    grid: Optional[DepthGrid] = None,
) -> ProfileSet:
    """
    Generate a reproducible synthetic profile family.

    Args:
        spec: Shape, perturbation amplitudes, count and metadata ranges
        rng: Exclusively owned random stream
        grid: Depth grid (default 2 m over 300 m)

    Returns:
        ProfileSet of spec.count profiles, all within the plausibility band
    """
    grid = grid or DepthGrid.from_max_depth(300.0, 2.0)
    depths = grid.depths
    base = spec.base_shape(depths)
    low, high = spec.speed_band
    if np.any(base < low) or np.any(base > high):
        raise SynthSpecError("base profile shape violates the plausibility band")

    amplitudes = np.asarray(spec.mode_amplitudes, dtype=float)
    modes = cosine_modes(depths, amplitudes.size)
    weights = rng.normal(size=(spec.count, amplitudes.size)) * amplitudes
    speeds = base[None, :] + weights @ modes.T

    lats = rng.uniform(*spec.lat_range, size=spec.count)
    lons = rng.uniform(*spec.lon_range, size=spec.count)
    years = rng.integers(spec.year_range[0], spec.year_range[1] + 1, size=spec.count)
    months = rng.choice(np.asarray(spec.months), size=spec.count)
    days = rng.integers(1, 29, size=spec.count)

    profiles = []
    for n in range(spec.count):
        meta = ProfileMeta(
            latitude=float(lats[n]),
            longitude=float(lons[n]),
            year=int(years[n]),
            month=int(months[n]),
            day=int(days[n]),
            synthetic=True,
            profile_id=f"synth-{n:05d}",
        )
        profile = SoundSpeedProfile(grid, speeds[n], meta)
        try:
            profile.check_band(spec.speed_band)
        except ProfileValidationError as e:
            raise SynthSpecError(f"synthetic profile {n} leaves the plausibility band: {e}") from e
        profiles.append(profile)

    logger.info(f"🌊 Generated synthetic ocean: {spec.count} profiles, {amplitudes.size} modes")
    return ProfileSet(grid, tuple(profiles))


def make_geometry(
    swath_width: float,
    n_beam: int,
    z_b: float,
    source_depth: float = 0.0,
) -> Geometry:
    """n_beam angles uniformly spaced over [-swath/2, +swath/2] (degrees in, radians out)"""
    if not 0.0 < swath_width < 180.0:
        raise GeometryError(f"swath width must lie in (0, 180) degrees, got {swath_width}")
    if int(n_beam) != n_beam or n_beam < 1:
        raise GeometryError(f"need at least one beam, got {n_beam}")
    if n_beam == 1:
        angles = np.zeros(1)
    else:
        half = swath_width / 2.0
        angles = np.deg2rad(np.linspace(-half, half, int(n_beam)))
    return Geometry(bottom_depth=float(z_b), beam_angles=tuple(angles), source_depth=source_depth)


def sigma_t_from_spatial(sigma_x: float, c_ref: float = DEFAULT_C_REF) -> float:
    """Travel-time noise from range noise: sigma_t = 2 sigma_x / c"""
    if c_ref <= 0:
        raise MeasurementError(f"reference sound speed must be positive, got {c_ref}")
    if sigma_x < 0:
        raise MeasurementError(f"spatial error must be nonnegative, got {sigma_x}")
    return 2.0 * sigma_x / c_ref


def spatial_from_sigma_t(sigma_t: float, c_ref: float = DEFAULT_C_REF) -> float:
    if c_ref <= 0:
        raise MeasurementError(f"reference sound speed must be positive, got {c_ref}")
    return c_ref * sigma_t / 2.0


@dataclass(frozen=True)
class MeasurementSet:
    """Noisy two-way times, one row per (ping, non-turned beam)"""
    geometry: Geometry
    pings: np.ndarray
    angles: np.ndarray
    times: np.ndarray
    sigma_t: float
    truth_id: Optional[str] = None
    seed: Optional[int] = None
    n_ping: int = 1
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("pings", "angles", "times"):
            arr = np.asarray(getattr(self, name))
            arr = arr.astype(int if name == "pings" else float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not (self.pings.shape == self.angles.shape == self.times.shape):
            raise MeasurementError("ping, angle and time columns differ in length")
        if self.times.size == 0:
            raise EmptyMeasurementError("measurement set has no observations")
        if not np.all(np.isfinite(self.times)) or np.any(self.times <= 0):
            raise MeasurementError("measured times must be positive and finite")
        if self.sigma_t < 0:
            raise MeasurementError("sigma_t must be nonnegative")
        if self.n_obs != self.beams_used * self.n_ping:
            raise MeasurementError(
                f"{self.n_obs} observations do not match {self.beams_used} beams x {self.n_ping} pings"
            )

    @property
    def n_obs(self) -> int:
        return int(self.times.size)

    @property
    def beams_used(self) -> int:
        return int(np.unique(self.angles).size)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"ping": self.pings, "angle_rad": self.angles, "time_s": self.times})

    def sidecar(self) -> dict:
        return {
            "format_version": MEASUREMENT_FORMAT_VERSION,
            "geometry": self.geometry.to_dict(),
            "sigma_t": self.sigma_t,
            "seed": self.seed,
            "truth_id": self.truth_id,
            "n_ping": self.n_ping,
            **self.extra,
        }

    def save(self, path: Union[str, Path]) -> Path:
        """Write ``<path>`` (CSV) and ``<path stem>.json`` (sidecar); returns the sidecar path"""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False, float_format="%.17g", lineterminator="\n")
        sidecar = path.with_suffix(".json")
        sidecar.write_text(json.dumps(self.sidecar(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return sidecar

    @classmethod
    def load(cls, path: Union[str, Path]) -> "MeasurementSet":
        path = Path(path)
        sidecar = path.with_suffix(".json")
        if not path.exists():
            raise PersistenceError(f"measurement file not found: {path}")
        if not sidecar.exists():
            raise PersistenceError(f"measurement sidecar not found: {sidecar}")
        try:
            meta = json.loads(sidecar.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise PersistenceError(f"corrupt measurement sidecar {sidecar}: {e}") from e
        frame = _read_measurement_csv(path)
        extra = {k: v for k, v in meta.items()
                 if k not in ("format_version", "geometry", "sigma_t", "seed", "truth_id", "n_ping")}
        return cls(
            geometry=Geometry.from_dict(meta["geometry"]),
            pings=frame["ping"].to_numpy(),
            angles=frame["angle_rad"].to_numpy(),
            times=frame["time_s"].to_numpy(),
            sigma_t=float(meta["sigma_t"]),
            truth_id=meta.get("truth_id"),
            seed=meta.get("seed"),
            n_ping=int(meta.get("n_ping", 1)),
            extra=extra,
        )


def _read_measurement_csv(path: Path) -> pd.DataFrame:
    try:
        raw = pd.read_csv(path, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError as e:
        raise MeasurementParseError("measurement file is empty", row=1) from e
    except pd.errors.ParserError as e:
        raise MeasurementParseError(f"malformed measurement file ({e})") from e
    if [c.strip() for c in raw.columns] != MEASUREMENT_COLUMNS:
        raise MeasurementParseError(f"expected header {','.join(MEASUREMENT_COLUMNS)}", row=1)
    raw.columns = MEASUREMENT_COLUMNS
    numeric = raw.apply(lambda col: pd.to_numeric(col.str.strip(), errors="coerce"))
    values = numeric.to_numpy(dtype=float)
    bad = ~np.isfinite(values).all(axis=1)
    if bad.any():
        row = int(np.argmax(bad))
        raise MeasurementParseError(f"unparseable values {raw.iloc[row].tolist()}", row=row + 2)
    return numeric


def simulate_measurements(
    truth: SoundSpeedProfile,
    geometry: Geometry,
    sigma_t: float,
    n_ping: int,
    rng: np.random.Generator,
    truth_id: Optional[str] = None,
    seed: Optional[int] = None,
) -> MeasurementSet:
    """
    Simulate n_ping pings of the geometry over the truth profile.

    Every non-turned beam of every ping gets an independent N(0, sigma_t²)
    error on its exact two-way time. Turned beams are excluded.
    """
    if sigma_t < 0:
        raise MeasurementError("sigma_t must be nonnegative")
    if int(n_ping) != n_ping or n_ping < 1:
        raise MeasurementError(f"need at least one ping, got {n_ping}")

    tracer = LayeredRayTracer(truth.grid, geometry)
    exact, _, turned = tracer.trace(truth.speeds)
    if np.all(turned):
        raise EmptyMeasurementError("every beam turns before reaching the bottom")
    if np.any(turned):
        logger.warning(f"⚠️ {int(turned.sum())}/{turned.size} beams turn and are excluded")

    ok_angles = geometry.angles[~turned]
    ok_times = exact[~turned]
    n_ok = ok_angles.size
    pings = np.repeat(np.arange(int(n_ping)), n_ok)
    angles = np.tile(ok_angles, int(n_ping))
    times = np.tile(ok_times, int(n_ping))
    if sigma_t > 0:
        times = times + rng.normal(0.0, sigma_t, size=times.size)

    return MeasurementSet(
        geometry=geometry,
        pings=pings,
        angles=angles,
        times=times,
        sigma_t=float(sigma_t),
        truth_id=truth_id if truth_id is not None else (truth.meta.profile_id or None),
        seed=seed,
        n_ping=int(n_ping),
    )
