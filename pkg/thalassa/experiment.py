# thalassa/experiment.py - Dataset assembly and the per-test-profile inversion pipeline

"""
Experiment pipeline
===================
``build_dataset`` turns the configured profile source (CSV or synthetic
ocean) into training and test sets. ``run_cases`` simulates a survey over
every test profile, sweeps the alpha grid, selects alpha and scores the
inverted profile against its truth. Cases run in parallel with per-case
random streams and are gathered in case order.
"""

import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from joblib import Parallel, delayed
from loguru import logger

from thalassa.alphasel import (
    AlphaNet,
    baseline_select_alpha,
    extract_features,
    oracle_select_alpha,
    select_alpha,
    true_errors,
)
from thalassa.config import STREAM_OCEAN, STREAM_SIMULATE, ExperimentConfig, derive_rng
from thalassa.eof import EofBasis, reconstruct
from thalassa.errors import (
    ConfigError,
    MeasurementError,
    NoConvergedInversionError,
)
from thalassa.forward import Geometry
from thalassa.invert import (
    GaussNewtonDiagnostics,
    InversionConfig,
    SweepResult,
    TravelTimeProblem,
    gauss_newton,
    sweep,
)
from thalassa.profiles import (
    ProfileSet,
    RecordError,
    SoundSpeedProfile,
    crop_depth,
    filter_profiles,
    parse_profiles_report,
    rms_error,
)
from thalassa.synth import MeasurementSet, generate_ocean, simulate_measurements

INVERSE_CRIME_NOTE = (
    "Measurements are simulated with the same layered forward model used by the inversion "
    "(inverse crime); synthetic truths come from cosine modes outside the EOF span."
)


# ---------------------------------------------------------------------------
# Dataset
# ---------------------------------------------------------------------------

@dataclass
class Dataset:
    train: ProfileSet
    test: ProfileSet
    source: str
    n_loaded: int
    rejected: List[RecordError] = field(default_factory=list)


def load_profiles(config: ExperimentConfig) -> Tuple[ProfileSet, List[RecordError], str]:
    grid = config.grid.to_grid()
    if config.dataset.profiles_csv:
        profiles, rejected = parse_profiles_report(config.dataset.profiles_csv, grid, config.dataset.speed_band)
        return profiles, rejected, str(config.dataset.profiles_csv)
    ocean = generate_ocean(config.ocean, derive_rng(config.seed, STREAM_OCEAN), grid)
    return ocean, [], "synthetic"


def build_dataset(config: ExperimentConfig) -> Dataset:
    """Load, filter by box and months, split by year ranges, crop to the working depth"""
    profiles, rejected, source = load_profiles(config)
    ds = config.dataset
    box = ds.bounding_box()
    train = crop_depth(filter_profiles(profiles, box, ds.months, ds.train_years), ds.crop_depth_m)
    test = crop_depth(filter_profiles(profiles, box, ds.months, ds.test_years), ds.crop_depth_m)
    logger.info(f"📚 Dataset from {source}: {len(train)} training / {len(test)} test profiles")
    return Dataset(train=train, test=test, source=source, n_loaded=len(profiles), rejected=rejected)


# ---------------------------------------------------------------------------
# Alpha selection on one sweep
# ---------------------------------------------------------------------------

@dataclass
class CaseSettings:
    """Everything one inversion needs besides the truth and the basis"""
    geometry: Geometry
    sigma_t: float
    n_ping: int
    inversion: InversionConfig
    mode: str = "baseline"
    fixed_alpha: Optional[float] = None
    net: Optional[AlphaNet] = None


def settings_from_config(config: ExperimentConfig, net: Optional[AlphaNet] = None) -> CaseSettings:
    mode = config.alpha_selection.mode
    if mode == "net" and net is None:
        raise ConfigError("alpha selection mode 'net' needs a trained network")
    return CaseSettings(
        geometry=config.geometry.to_geometry(),
        sigma_t=config.measurement.sigma_t,
        n_ping=config.measurement.n_ping,
        inversion=config.inversion,
        mode=mode,
        fixed_alpha=config.alpha_selection.fixed_alpha,
        net=net,
    )


@dataclass
class InversionOutcome:
    sweep: SweepResult
    alpha: float
    index: int                           # nearest grid index for off-grid (fixed) alphas
    x: np.ndarray
    misfit: float
    iterations: int
    converged: bool
    mode: str
    diagnostics: Optional[GaussNewtonDiagnostics] = None

    @property
    def n_converged(self) -> int:
        return int(self.sweep.converged.sum())


def select_solution(
    result: SweepResult,
    m: MeasurementSet,
    basis: EofBasis,
    settings: CaseSettings,
    truth: Optional[SoundSpeedProfile] = None,
) -> InversionOutcome:
    """Pick the solution of a finished sweep with the configured alpha-selection mode"""
    if not result.converged.any():
        raise NoConvergedInversionError("no alpha of the grid produced a converged inversion")

    mode = settings.mode
    if mode == "net":
        if settings.net is None:
            raise ConfigError("alpha selection mode 'net' needs a trained network")
        alpha, i = select_alpha(settings.net, extract_features(result, basis), result.alphas)
    elif mode == "baseline":
        alpha, i = baseline_select_alpha(result, m.sigma_t)
    elif mode == "oracle":
        if truth is None:
            raise ConfigError("alpha selection mode 'oracle' needs the true profile")
        alpha, i = oracle_select_alpha(result, truth)
    elif mode == "fixed":
        return _invert_fixed(m, basis, settings, result)
    else:
        raise ConfigError(f"unknown alpha selection mode '{mode}'")

    entry = result.entries[i]
    return InversionOutcome(result, alpha, i, entry.x, entry.misfit, entry.iterations, entry.converged, mode)


def invert_measurements(
    m: MeasurementSet,
    basis: EofBasis,
    settings: CaseSettings,
    truth: Optional[SoundSpeedProfile] = None,
) -> InversionOutcome:
    """Sweep the alpha grid and return the selected solution"""
    result = sweep(m, basis, m.geometry, settings.inversion)
    return select_solution(result, m, basis, settings, truth)


def _invert_fixed(m: MeasurementSet, basis: EofBasis, settings: CaseSettings,
                  result: SweepResult) -> InversionOutcome:
    """Gauss-Newton at the configured alpha, started from the closest converged grid solution"""
    alpha = float(settings.fixed_alpha)
    conv = np.flatnonzero(result.converged)
    log_grid = np.log10(result.alphas[conv])
    target = np.log10(alpha) if alpha > 0 else -np.inf
    nearest = int(conv[np.argmin(np.abs(log_grid - target))])
    x0 = result.entries[nearest].x
    problem = TravelTimeProblem(m, basis, m.geometry, penalty_factor=settings.inversion.turned_penalty_factor)
    x, diag = gauss_newton(x0, m, basis, alpha, settings.inversion, problem)
    misfit = problem.misfit(x)
    return InversionOutcome(result, alpha, nearest, x, misfit, diag.iterations, diag.converged, "fixed", diag)


# ---------------------------------------------------------------------------
# Per-case pipeline
# ---------------------------------------------------------------------------

@dataclass
class CaseResult:
    index: int
    profile_id: str
    rms_error: float
    selected_alpha: float
    selected_index: int
    misfit: float
    iterations: int
    converged: bool
    n_obs: int
    beams_used: int
    oracle_rms_error: float
    baseline_rms_error: float
    runtime_ms: float
    inverted_speeds: Optional[np.ndarray] = None
    failure: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.failure is None

    def row(self) -> Dict[str, object]:
        return {
            "index": self.index,
            "profile_id": self.profile_id,
            "rms_error": self.rms_error,
            "selected_alpha": self.selected_alpha,
            "selected_index": self.selected_index,
            "misfit": self.misfit,
            "iterations": self.iterations,
            "converged": int(self.converged),
            "n_obs": self.n_obs,
            "beams_used": self.beams_used,
            "oracle_rms_error": self.oracle_rms_error,
            "baseline_rms_error": self.baseline_rms_error,
            "failure": self.failure or "",
        }


def run_case(
    index: int,
    truth: SoundSpeedProfile,
    basis: EofBasis,
    settings: CaseSettings,
    rng: np.random.Generator,
) -> CaseResult:
    """Simulate, invert and score one test profile; failures are recorded, not raised"""
    t0 = time.perf_counter()
    pid = truth.meta.profile_id or f"case-{index}"
    try:
        m = simulate_measurements(truth, settings.geometry, settings.sigma_t, settings.n_ping, rng, truth_id=pid)
        outcome = invert_measurements(m, basis, settings, truth)
    except (MeasurementError, NoConvergedInversionError) as e:
        nan = float("nan")
        return CaseResult(index, pid, nan, nan, -1, nan, 0, False, 0, 0, nan, nan,
                          (time.perf_counter() - t0) * 1000, failure=str(e))

    inverted = reconstruct(basis, outcome.x)
    errors = true_errors(outcome.sweep, truth)
    _, b_idx = baseline_select_alpha(outcome.sweep, m.sigma_t)
    return CaseResult(
        index=index,
        profile_id=pid,
        rms_error=rms_error(inverted, truth),
        selected_alpha=outcome.alpha,
        selected_index=outcome.index,
        misfit=outcome.misfit,
        iterations=outcome.iterations,
        converged=outcome.converged,
        n_obs=m.n_obs,
        beams_used=m.beams_used,
        oracle_rms_error=float(np.nanmin(errors)),
        baseline_rms_error=float(errors[b_idx]),
        runtime_ms=(time.perf_counter() - t0) * 1000,
        inverted_speeds=np.array(inverted.speeds),
    )


def run_cases(
    test: ProfileSet,
    basis: EofBasis,
    settings: CaseSettings,
    seed: int,
    n_jobs: int = 1,
) -> List[CaseResult]:
    """
    Invert every test profile.

    Case i always draws its noise from derive_rng(seed, STREAM_SIMULATE, i),
    so results do not depend on n_jobs and axis values share noise streams.
    """
    test.require_nonempty("test set")
    results = Parallel(n_jobs=n_jobs)(
        delayed(run_case)(i, truth, basis, settings, derive_rng(seed, STREAM_SIMULATE, i))
        for i, truth in enumerate(test)
    )
    failed = [r for r in results if not r.ok]
    if failed:
        logger.warning(f"⚠️ {len(failed)}/{len(results)} cases failed (first: {failed[0].failure})")
    return list(results)
