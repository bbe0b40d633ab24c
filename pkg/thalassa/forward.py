# thalassa/forward.py - Layered ray tracing of bottom-reflected MBES travel times

"""
Forward model
=============
Range-independent ocean over a flat bottom, profile treated as
piecewise-constant layers of thickness dz (layer i carries the speed of its
upper grid point). For a beam leaving the transducer at angle theta_1 from the
vertical, Snell's law conserves p = sin(theta_1) / c_1 and the one-way time
and horizontal offset are

    t = sum_i h_i / (c_i sqrt(1 - c_i² p²))
    r = sum_i h_i c_i p / sqrt(1 - c_i² p²)

The two-way time is twice the one-way time (colocated transmit/receive,
specular return along the mirrored path). A ray with c_i p >= 1 in any
traversed layer turns before reaching the bottom and carries no time.
"""

from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Sequence, Tuple, Union

import numpy as np
import pandas as pd

from thalassa.eof import Coefficients, EofBasis, reconstruct
from thalassa.errors import GeometryError, GridError
from thalassa.profiles import DepthGrid, SoundSpeedProfile


class RayStatus(str, Enum):
    OK = "ok"
    TURNED = "turned"


@dataclass(frozen=True)
class Geometry:
    """Flat-bottom scene: bottom depth, transducer depth and beam angles (rad from vertical)"""
    bottom_depth: float
    beam_angles: Tuple[float, ...]
    source_depth: float = 0.0

    def __post_init__(self):
        angles = tuple(float(a) for a in np.atleast_1d(np.asarray(self.beam_angles, dtype=float)))
        object.__setattr__(self, "beam_angles", angles)
        if not angles:
            raise GeometryError("geometry needs at least one beam angle")
        if not all(np.isfinite(a) and abs(a) < np.pi / 2 for a in angles):
            raise GeometryError("beam angles must lie strictly inside (-pi/2, pi/2)")
        if not (0.0 <= self.source_depth < self.bottom_depth):
            raise GeometryError(
                f"need 0 <= source depth ({self.source_depth}) < bottom depth ({self.bottom_depth})"
            )

    @property
    def angles(self) -> np.ndarray:
        return np.asarray(self.beam_angles, dtype=float)

    @property
    def n_beam(self) -> int:
        return len(self.beam_angles)

    def with_angles(self, angles: Sequence[float]) -> "Geometry":
        return Geometry(self.bottom_depth, tuple(angles), self.source_depth)

    def check_grid(self, grid: DepthGrid) -> None:
        if self.bottom_depth > grid.max_depth + 1e-9:
            raise GridError(
                f"bottom depth {self.bottom_depth} m lies below the grid bottom {grid.max_depth} m"
            )

    def to_dict(self) -> dict:
        return {
            "bottom_depth": self.bottom_depth,
            "source_depth": self.source_depth,
            "beam_angles": list(self.beam_angles),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Geometry":
        return cls(
            bottom_depth=float(data["bottom_depth"]),
            beam_angles=tuple(data["beam_angles"]),
            source_depth=float(data.get("source_depth", 0.0)),
        )


@dataclass(frozen=True)
class RayArrival:
    two_way_time: float      # seconds, nan when turned
    offset: float            # meters at the bottom, nan when turned
    status: RayStatus


@dataclass(frozen=True)
class TravelTimeSet:
    angles: np.ndarray       # rad
    times: np.ndarray        # two-way seconds, nan for turned rays
    offsets: np.ndarray      # meters, nan for turned rays
    turned: np.ndarray       # bool

    @property
    def ok(self) -> np.ndarray:
        return ~self.turned

    @property
    def status(self) -> Tuple[RayStatus, ...]:
        return tuple(RayStatus.TURNED if t else RayStatus.OK for t in self.turned)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "angle_rad": self.angles,
            "time_s": self.times,
            "offset_m": self.offsets,
            "status": [s.value for s in self.status],
        })

    def to_csv(self, path: Union[str, Path]) -> None:
        self.to_frame().to_csv(path, index=False, float_format="%.17g", lineterminator="\n")


def layer_thicknesses(grid: DepthGrid, source_depth: float, bottom_depth: float) -> np.ndarray:
    """Thickness of each grid layer [z_i, z_{i+1}] inside [source_depth, bottom_depth]"""
    depths = grid.depths
    tops = np.maximum(depths[:-1], source_depth)
    bottoms = np.minimum(depths[1:], bottom_depth)
    return np.clip(bottoms - tops, 0.0, None)


class LayeredRayTracer:
    """
    Precomputed layer geometry for one grid and one set of angles.

    ``trace`` maps a speed vector on the grid to two-way times, offsets and
    turned flags for every angle. Used directly by the inversion, which calls
    it thousands of times per sweep.
    """

    def __init__(self, grid: DepthGrid, geometry: Geometry):
        geometry.check_grid(grid)
        self.grid = grid
        self.geometry = geometry
        self.thickness = layer_thicknesses(grid, geometry.source_depth, geometry.bottom_depth)
        self.active = np.flatnonzero(self.thickness > 0)
        if self.active.size == 0:
            raise GeometryError("no water layer between source and bottom")
        self.h = self.thickness[self.active]
        self.source_layer = int(self.active[0])
        self.sin_theta = np.sin(geometry.angles)

    def trace(self, speeds: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        c = np.asarray(speeds, dtype=float)[self.active]
        p = self.sin_theta / c[0]                                 # (A,)
        cp = np.outer(p, c)                                        # (A, L)
        cos_t2 = 1.0 - cp * cp
        turned = np.any(cos_t2 <= 0.0, axis=1) | np.any(c <= 0.0)
        with np.errstate(invalid="ignore", divide="ignore"):
            cos_t = np.sqrt(np.where(cos_t2 > 0.0, cos_t2, np.nan))
            one_way = (self.h / c / cos_t).sum(axis=1)
            offsets = (self.h * cp / cos_t).sum(axis=1)
        times = np.where(turned, np.nan, 2.0 * one_way)
        offsets = np.where(turned, np.nan, offsets)
        return times, offsets, turned


def layered_travel_time(profile: SoundSpeedProfile, theta1: float, geometry: Geometry) -> RayArrival:
    """Two-way time and bottom offset of one beam, or a turned status"""
    tracer = LayeredRayTracer(profile.grid, geometry.with_angles([theta1]))
    times, offsets, turned = tracer.trace(profile.speeds)
    if turned[0]:
        return RayArrival(float("nan"), float("nan"), RayStatus.TURNED)
    return RayArrival(float(times[0]), float(offsets[0]), RayStatus.OK)


def travel_times(profile: SoundSpeedProfile, geometry: Geometry) -> TravelTimeSet:
    """Trace every beam of the geometry, preserving angle order"""
    tracer = LayeredRayTracer(profile.grid, geometry)
    times, offsets, turned = tracer.trace(profile.speeds)
    return TravelTimeSet(geometry.angles, times, offsets, turned)


def travel_times_of_coefficients(basis: EofBasis, x: Coefficients, geometry: Geometry) -> TravelTimeSet:
    return travel_times(reconstruct(basis, x), geometry)


def layer_swap(profile: SoundSpeedProfile, i: int, j: int) -> SoundSpeedProfile:
    """
    Swap the speeds of layers i and j.

    Travel times of every non-turned beam are unchanged as long as both
    layers have equal thickness and neither is the source layer (which fixes
    p), which is the non-uniqueness of the travel-time inverse problem.
    """
    speeds = np.array(profile.speeds)
    speeds[[i, j]] = speeds[[j, i]]
    return SoundSpeedProfile(profile.grid, speeds, profile.meta)


def vertical_two_way_time(profile: SoundSpeedProfile, geometry: Geometry) -> float:
    """2 * sum(h_i / c_i): the single-beam limit, depending on the mean slowness only"""
    h = layer_thicknesses(profile.grid, geometry.source_depth, geometry.bottom_depth)
    return float(2.0 * np.sum(h / profile.speeds[:-1]))
