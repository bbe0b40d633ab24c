# thalassa/alphasel/features.py - Normalised per-alpha sweep features and operative windows

from dataclasses import dataclass

import numpy as np
from loguru import logger

from thalassa.eof import EofBasis
from thalassa.errors import AlphaNetError, DimensionMismatchError, NoConvergedInversionError
from thalassa.invert import SweepResult


def observation_scalar(n_obs: int) -> float:
    """Observation count as a network input: log10(N_obs) / 4"""
    if n_obs < 1:
        raise AlphaNetError(f"observation count must be positive, got {n_obs}")
    return float(np.log10(n_obs) / 4.0)


def input_dim(n_eof: int, k: int) -> int:
    """Window length (2k+1) blocks of (1 + n_eof) features plus the observation scalar"""
    return (2 * k + 1) * (1 + n_eof) + 1


@dataclass(frozen=True)
class SweepFeatures:
    a: np.ndarray            # (N_inv,) root misfit over the sweep median
    b: np.ndarray            # (N_inv, n_eof) coefficients over sigma_k
    n_obs: int
    flagged: np.ndarray      # (N_inv,) True where features were borrowed from a converged neighbour

    @property
    def n_inv(self) -> int:
        return int(self.a.size)

    @property
    def n_eof(self) -> int:
        return int(self.b.shape[1])

    @property
    def blocks(self) -> np.ndarray:
        """A_i = (a_i, b_i), shape (N_inv, 1 + n_eof)"""
        return np.column_stack([self.a, self.b])

    @property
    def n_scalar(self) -> float:
        return observation_scalar(self.n_obs)


def _nearest_converged(converged: np.ndarray) -> np.ndarray:
    """Index of the closest converged entry for every position (ties go to the larger alpha)"""
    good = np.flatnonzero(converged)
    positions = np.arange(converged.size)
    dist = np.abs(positions[:, None] - good[None, :]).astype(float)
    # Prefer the larger index among equidistant neighbours
    dist -= 1e-3 * (good[None, :] > positions[:, None])
    return good[np.argmin(dist, axis=1)]


def extract_features(sweep: SweepResult, basis: EofBasis) -> SweepFeatures:
    """
    Dimensionless features of every alpha of a sweep.

    Args:
        sweep: Inversion results, ascending alpha
        basis: Basis the sweep was run with (provides sigma_k)

    Returns:
        SweepFeatures. Entries that did not converge carry the features of
        the nearest converged entry and are flagged.
    """
    converged = sweep.converged & np.isfinite(sweep.misfits)
    if not converged.any():
        raise NoConvergedInversionError("no converged inversion in the sweep")
    if sweep.coefficients.shape[1] != basis.n_eof:
        raise DimensionMismatchError(
            f"sweep carries {sweep.coefficients.shape[1]} coefficients, basis has {basis.n_eof}"
        )

    source = _nearest_converged(converged)
    root = np.sqrt(np.clip(sweep.misfits[source], 0.0, None))
    b = sweep.coefficients[source] / basis.sigma

    ref = root[converged]
    if np.all(ref == ref[0]):
        a = np.ones_like(root)
    else:
        scale = float(np.median(ref))
        if scale <= 0.0:
            scale = float(np.max(ref))
        a = root / scale

    flagged = ~converged
    if flagged.any():
        logger.debug(f"{int(flagged.sum())} sweep entries borrow features from converged neighbours")
    return SweepFeatures(a=a, b=b, n_obs=sweep.n_obs, flagged=flagged)


def window_input(features: SweepFeatures, i: int, k: int) -> np.ndarray:
    """
    Operative window around alpha index i (0-based).

    Concatenates A_{i-k} .. A_{i+k}, where indices below 0 resolve to A_0 and
    indices above N_inv-1 to A_{N_inv-1}, then appends the observation scalar.
    """
    n = features.n_inv
    if not 0 <= i < n:
        raise AlphaNetError(f"window index {i} outside [0, {n - 1}]")
    if k < 0:
        raise AlphaNetError(f"window half-width must be nonnegative, got {k}")
    idx = np.clip(np.arange(i - k, i + k + 1), 0, n - 1)
    return np.concatenate([features.blocks[idx].ravel(), [features.n_scalar]])


def window_matrix(features: SweepFeatures, k: int) -> np.ndarray:
    """All windows of a sweep, one row per alpha index"""
    return np.vstack([window_input(features, i, k) for i in range(features.n_inv)])
