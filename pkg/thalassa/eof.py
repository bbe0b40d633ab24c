# thalassa/eof.py - Truncated EOF basis: build, project, reconstruct, prior, sampling

"""
Empirical orthogonal functions of historical profiles.

A profile is written as c(x) = mean + U x, where the columns of U are the
leading left singular vectors of the centered training matrix and x are the
EOF coefficients. Coefficients are treated as independent zero-mean
Gaussians with standard deviations sigma estimated from the training set.
"""

import io
import zipfile
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np
from loguru import logger
from numpy.lib import format as npy_format
from scipy import linalg

from thalassa.errors import (
    DegenerateBasisError,
    DimensionMismatchError,
    GridMismatchError,
    PersistenceError,
)
from thalassa.profiles import DepthGrid, ProfileMeta, ProfileSet, SoundSpeedProfile

BASIS_FORMAT_VERSION = 1
SINGULAR_VALUE_FLOOR = 1e-12
ORTHONORMALITY_TOLERANCE = 1e-10
NPZ_MEMBER_TIME = (1980, 1, 1, 0, 0, 0)

# EOF coefficient vector, length n_eof
Coefficients = np.ndarray


def _write_npz(path: Path, arrays: Dict[str, np.ndarray]) -> None:
    """np.savez layout with a fixed member timestamp: equal arrays give equal bytes"""
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        for name, arr in arrays.items():
            buf = io.BytesIO()
            npy_format.write_array(buf, np.asanyarray(arr), allow_pickle=False)
            zf.writestr(zipfile.ZipInfo(f"{name}.npy", date_time=NPZ_MEMBER_TIME), buf.getvalue())


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class EofBasis:
    grid: DepthGrid
    mean: np.ndarray          # (K,)
    modes: np.ndarray         # (K, n_eof), orthonormal columns
    sigma: np.ndarray         # (n_eof,), non-increasing, positive
    n_training: int
    explained_variance: Optional[np.ndarray] = None  # fraction of training variance per EOF

    def __post_init__(self):
        mean, modes, sigma = _freeze(self.mean), _freeze(self.modes), _freeze(self.sigma)
        k = self.grid.count
        if mean.shape != (k,):
            raise DimensionMismatchError(f"mean has shape {mean.shape}, grid has {k} points")
        if modes.ndim != 2 or modes.shape[0] != k:
            raise DimensionMismatchError(f"modes have shape {modes.shape}, expected ({k}, n_eof)")
        n_eof = modes.shape[1]
        if sigma.shape != (n_eof,):
            raise DimensionMismatchError(f"sigma has shape {sigma.shape}, expected ({n_eof},)")
        if n_eof < 1 or n_eof > min(k, self.n_training):
            raise DimensionMismatchError(
                f"n_eof={n_eof} must lie in [1, min(K={k}, n_training={self.n_training})]"
            )
        if np.any(sigma <= 0) or not np.all(np.isfinite(sigma)):
            raise DegenerateBasisError("EOF coefficient standard deviations must be positive")
        if np.any(np.diff(sigma) > 1e-12 * sigma[0]):
            raise DegenerateBasisError("EOF coefficient standard deviations must be non-increasing")
        gram_err = np.max(np.abs(modes.T @ modes - np.eye(n_eof)))
        if gram_err > ORTHONORMALITY_TOLERANCE:
            raise DegenerateBasisError(f"EOFs are not orthonormal (max |UᵀU - I| = {gram_err:.2e})")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "sigma", sigma)
        if self.explained_variance is not None:
            object.__setattr__(self, "explained_variance", _freeze(self.explained_variance))

    @property
    def n_eof(self) -> int:
        return self.modes.shape[1]

    def truncated(self, n_eof: int) -> "EofBasis":
        """Same basis keeping only the first n_eof EOFs"""
        if not 1 <= n_eof <= self.n_eof:
            raise DimensionMismatchError(f"cannot truncate {self.n_eof} EOFs to {n_eof}")
        ev = None if self.explained_variance is None else self.explained_variance[:n_eof]
        return EofBasis(self.grid, self.mean, self.modes[:, :n_eof], self.sigma[:n_eof],
                        self.n_training, ev)

    def summary(self) -> List[Dict[str, float]]:
        """Per-EOF sigma and explained-variance fractions"""
        rows = []
        cumulative = 0.0
        for k in range(self.n_eof):
            frac = float(self.explained_variance[k]) if self.explained_variance is not None else float("nan")
            cumulative += frac
            rows.append({
                "eof": k + 1,
                "sigma": float(self.sigma[k]),
                "explained_variance": frac,
                "cumulative_explained_variance": cumulative,
            })
        return rows

    def save(self, path: Union[str, Path]) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        ev = self.explained_variance if self.explained_variance is not None else np.full(self.n_eof, np.nan)
        _write_npz(path, {
            "format_version": np.array(BASIS_FORMAT_VERSION),
            "grid_count": np.array(self.grid.count),
            "grid_spacing": np.array(self.grid.spacing),
            "mean": self.mean,
            "modes": self.modes,
            "sigma": self.sigma,
            "n_training": np.array(self.n_training),
            "explained_variance": ev,
        })
        logger.debug(f"Saved EOF basis ({self.n_eof} EOFs) to {path}")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "EofBasis":
        path = Path(path)
        if not path.exists():
            raise PersistenceError(f"basis file not found: {path}")
        try:
            with np.load(path, allow_pickle=False) as data:
                version = int(data["format_version"])
                if version != BASIS_FORMAT_VERSION:
                    raise PersistenceError(f"unsupported basis format version {version}")
                ev = data["explained_variance"]
                return cls(
                    grid=DepthGrid(int(data["grid_count"]), float(data["grid_spacing"])),
                    mean=data["mean"],
                    modes=data["modes"],
                    sigma=data["sigma"],
                    n_training=int(data["n_training"]),
                    explained_variance=None if np.all(np.isnan(ev)) else ev,
                )
        except (KeyError, ValueError, OSError) as e:
            raise PersistenceError(f"cannot read basis file {path}: {e}") from e


def _apply_sign_convention(modes: np.ndarray) -> np.ndarray:
    """Flip each column so its first non-negligible entry is nonnegative"""
    modes = modes.copy()
    for j in range(modes.shape[1]):
        col = modes[:, j]
        scale = np.max(np.abs(col))
        nonzero = np.flatnonzero(np.abs(col) > 1e-12 * scale)
        if nonzero.size and col[nonzero[0]] < 0:
            modes[:, j] = -col
    return modes


def build_basis(train: ProfileSet, n_eof: int) -> EofBasis:
    """
    Build a truncated EOF basis from training profiles.

    Args:
        train: Historical profiles on one grid
        n_eof: Number of EOFs kept

    Returns:
        EofBasis with mean, orthonormal EOFs and coefficient standard
        deviations (sample estimator, N-1 denominator)
    """
    train.require_nonempty("training set")
    n = len(train)
    k = train.grid.count
    if n_eof < 1:
        raise DimensionMismatchError("n_eof must be positive")
    if n < n_eof + 1:
        raise DegenerateBasisError(f"{n} training profiles cannot support {n_eof} EOFs (need {n_eof + 1})")
    if n_eof > k:
        raise DimensionMismatchError(f"n_eof={n_eof} exceeds the {k} grid depths")

    data = train.speed_matrix()
    mean = data.mean(axis=1)
    centered = data - mean[:, None]

    left, singular, _ = linalg.svd(centered, full_matrices=False)
    if singular.size == 0 or singular[0] < SINGULAR_VALUE_FLOOR:
        raise DegenerateBasisError("training profiles have zero variance")
    if singular[n_eof - 1] < SINGULAR_VALUE_FLOOR:
        rank = int(np.sum(singular >= SINGULAR_VALUE_FLOOR))
        raise DegenerateBasisError(f"training data has rank {rank}, cannot build {n_eof} EOFs")

    modes = _apply_sign_convention(left[:, :n_eof])
    coefficients = modes.T @ centered
    sigma = coefficients.std(axis=1, ddof=1)
    # sigma_k = s_k / sqrt(N-1) analytically; enforce the ordering against rounding
    sigma = np.minimum.accumulate(sigma)
    total = float(np.sum(singular ** 2))
    explained = singular[:n_eof] ** 2 / total

    basis = EofBasis(train.grid, mean, modes, sigma, n, explained)
    logger.info(
        f"🧭 Built EOF basis: {n_eof} EOFs from {n} profiles, "
        f"{100 * explained.sum():.1f}% of variance captured"
    )
    return basis


def _check_length(basis: EofBasis, x: Coefficients) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (basis.n_eof,):
        raise DimensionMismatchError(f"expected {basis.n_eof} coefficients, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise DimensionMismatchError("coefficients must be finite")
    return x


def project(basis: EofBasis, profile: SoundSpeedProfile) -> Coefficients:
    """x = Uᵀ(c - mean)"""
    if profile.grid != basis.grid:
        raise GridMismatchError(f"profile grid {profile.grid} differs from basis grid {basis.grid}")
    return basis.modes.T @ (profile.speeds - basis.mean)


def reconstruct_speeds(basis: EofBasis, x: Coefficients) -> np.ndarray:
    return basis.mean + basis.modes @ x


def reconstruct(basis: EofBasis, x: Coefficients, profile_id: str = "") -> SoundSpeedProfile:
    """c(x) = mean + U x, marked synthetic"""
    x = _check_length(basis, x)
    return SoundSpeedProfile(
        basis.grid,
        reconstruct_speeds(basis, x),
        ProfileMeta(synthetic=True, profile_id=profile_id),
    )


def log_prior(basis: EofBasis, x: Coefficients) -> float:
    """Sum of x_k² / sigma_k² (the regularisation term without alpha)"""
    x = _check_length(basis, x)
    if np.any(basis.sigma <= 0):
        raise DegenerateBasisError("zero coefficient standard deviation")
    return float(np.sum((x / basis.sigma) ** 2))


def sample_coefficients(basis: EofBasis, rng: np.random.Generator) -> Coefficients:
    """Independent draws x_k ~ N(0, sigma_k²)"""
    return rng.normal(0.0, 1.0, size=basis.n_eof) * basis.sigma
