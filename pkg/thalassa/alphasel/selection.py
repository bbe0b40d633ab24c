# thalassa/alphasel/selection.py - Choosing alpha: network argmin, discrepancy principle, grid oracle

from typing import Tuple

import numpy as np

from thalassa.alphasel.features import SweepFeatures, window_matrix
from thalassa.alphasel.network import AlphaNet
from thalassa.eof import reconstruct
from thalassa.errors import AlphaNetError, NoConvergedInversionError
from thalassa.invert import SweepResult
from thalassa.profiles import SoundSpeedProfile, rms_error


def argmin_prefer_larger(values: np.ndarray) -> int:
    """Index of the minimum; among exact ties, the largest index (largest alpha)"""
    values = np.asarray(values, dtype=float)
    if values.size == 0 or not np.any(np.isfinite(values)):
        raise AlphaNetError("no finite value to select from")
    best = np.nanmin(np.where(np.isfinite(values), values, np.nan))
    return int(np.flatnonzero(values == best).max())


def predict_errors(net: AlphaNet, features: SweepFeatures) -> np.ndarray:
    """Predicted RMS error at every alpha of the grid"""
    if features.n_eof != net.n_eof:
        raise AlphaNetError(f"net expects {net.n_eof} EOFs, features carry {features.n_eof}")
    return net.predict(window_matrix(features, net.k))


def select_alpha(net: AlphaNet, features: SweepFeatures, alpha_grid: np.ndarray) -> Tuple[float, int]:
    """
    Alpha with the lowest predicted error.

    Entries flagged as borrowed from a neighbour are skipped unless every
    entry is flagged.
    """
    alpha_grid = np.asarray(alpha_grid, dtype=float)
    if alpha_grid.size != features.n_inv:
        raise AlphaNetError(f"alpha grid has {alpha_grid.size} values, features cover {features.n_inv}")
    predicted = predict_errors(net, features)
    if not np.all(features.flagged):
        predicted = np.where(features.flagged, np.inf, predicted)
    i = argmin_prefer_larger(predicted)
    return float(alpha_grid[i]), i


def baseline_select_alpha(sweep: SweepResult, sigma_t: float) -> Tuple[float, int]:
    """
    Discrepancy principle: the smallest alpha whose per-observation misfit
    reaches sigma_t², else the largest alpha. Only converged entries compete.
    """
    converged = sweep.converged & np.isfinite(sweep.misfits)
    if not converged.any():
        raise NoConvergedInversionError("no converged inversion in the sweep")
    reached = np.flatnonzero(converged & (sweep.misfits >= sigma_t ** 2))
    i = int(reached[0]) if reached.size else int(np.flatnonzero(converged)[-1])
    return float(sweep.alphas[i]), i


def true_errors(sweep: SweepResult, truth: SoundSpeedProfile) -> np.ndarray:
    """RMS error (m/s) of the profile inverted at every alpha, nan where the inversion failed"""
    errors = np.full(len(sweep), np.nan)
    for i, entry in enumerate(sweep.entries):
        if entry.converged:
            errors[i] = rms_error(reconstruct(sweep.basis, entry.x), truth)
    return errors


def oracle_select_alpha(sweep: SweepResult, truth: SoundSpeedProfile) -> Tuple[float, int]:
    """Grid alpha with the smallest true error; only meaningful for synthetic truths"""
    errors = true_errors(sweep, truth)
    if not np.any(np.isfinite(errors)):
        raise NoConvergedInversionError("no converged inversion in the sweep")
    i = argmin_prefer_larger(errors)
    return float(sweep.alphas[i]), i
