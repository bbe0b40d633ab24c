# thalassa/invert.py - Regularised Gauss-Newton inversion of travel times over an alpha grid

"""
Inversion
=========
Minimises

    CF(x) = ||T - t(x)||² / N_obs + alpha * sum_k x_k² / sigma_k²

over the EOF coefficients x. The cost is written as the squared norm of an
augmented residual vector (data rows scaled by 1/sqrt(N_obs), prior rows
sqrt(alpha) x_k / sigma_k) and minimised by Gauss-Newton with
Levenberg-Marquardt damping and a central finite-difference Jacobian.
``sweep`` repeats the inversion over a log-spaced alpha grid,
warm-starting from large alpha to small.

A beam that turns under a proposed x but was observed is modelled with a
fixed penalty time (3 x the largest observed time by default), keeping the
cost finite and steering the optimiser away from turning regimes.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from loguru import logger
from pydantic import BaseModel, field_validator, model_validator
from scipy import linalg

from thalassa.eof import Coefficients, EofBasis, log_prior
from thalassa.errors import (
    AllBeamsTurnedError,
    DimensionMismatchError,
    InversionError,
    JacobianError,
    NonFiniteCostError,
)
from thalassa.forward import Geometry, LayeredRayTracer
from thalassa.synth import MeasurementSet

MAX_STEP_HALVINGS = 8
MIN_DAMPING_SHRINK = 1.0 / 3.0


class InversionConfig(BaseModel):
    """Alpha grid and Gauss-Newton controls"""

    alpha_min: float = 1e-16
    alpha_max: float = 1e-8
    n_alpha: int = 17
    alphas: Optional[List[float]] = None        # explicit grid, overrides min/max/n
    max_iterations: int = 50
    step_tolerance_mps: float = 1e-6            # RMS profile change of a GN step
    fd_relative_step: float = 1e-6              # per-coefficient step = max(min, rel * sigma_k)
    fd_min_step: float = 1e-3
    initial_damping: float = 1e-3               # LM damping relative to the largest diagonal of J^T J
    max_rejections: int = 12                    # damping increases per iteration before giving up
    turned_penalty_factor: float = 3.0

    @field_validator("max_iterations", "n_alpha", "max_rejections")
    @classmethod
    def _positive_int(cls, v: int) -> int:
        if v < 1:
            raise ValueError("must be positive")
        return v

    @field_validator("step_tolerance_mps", "fd_relative_step", "fd_min_step", "initial_damping",
                     "turned_penalty_factor")
    @classmethod
    def _positive(cls, v: float) -> float:
        if not v > 0:
            raise ValueError("must be positive")
        return v

    @model_validator(mode="after")
    def _grid(self) -> "InversionConfig":
        grid = self.alpha_grid
        if grid.size < 3:
            raise ValueError("alpha grid needs at least 3 values")
        if np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
            raise ValueError("alpha grid must be positive and strictly increasing")
        return self

    @property
    def alpha_grid(self) -> np.ndarray:
        if self.alphas is not None:
            return np.asarray(self.alphas, dtype=float)
        if not (0 < self.alpha_min < self.alpha_max):
            return np.array([self.alpha_min, self.alpha_max], dtype=float)
        return np.logspace(np.log10(self.alpha_min), np.log10(self.alpha_max), self.n_alpha)

    def fd_steps(self, basis: EofBasis) -> np.ndarray:
        return np.maximum(self.fd_min_step, self.fd_relative_step * basis.sigma)


class TravelTimeProblem:
    """
    Travel-time misfit of one MeasurementSet against one EOF basis.

    Beams are traced once per distinct |angle|; a range-independent ocean
    gives mirror beams identical times.
    """

    def __init__(
        self,
        measurements: MeasurementSet,
        basis: EofBasis,
        geometry: Optional[Geometry] = None,
        penalty_factor: float = 3.0,
    ):
        scene = geometry or measurements.geometry
        unique, inverse = np.unique(np.abs(measurements.angles), return_inverse=True)
        self.basis = basis
        self.tracer = LayeredRayTracer(basis.grid, scene.with_angles(unique))
        self.inverse = inverse.reshape(-1)
        self.observed = measurements.times
        self.n_obs = measurements.n_obs
        self.sqrt_n = np.sqrt(self.n_obs)
        self.penalty_time = penalty_factor * float(np.max(self.observed))

    @property
    def n_eof(self) -> int:
        return self.basis.n_eof

    def _check(self, x: Coefficients) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n_eof,):
            raise DimensionMismatchError(f"expected {self.n_eof} coefficients, got shape {x.shape}")
        return x

    def _trace_unique(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        speeds = self.basis.mean + self.basis.modes @ x
        times, _, turned = self.tracer.trace(speeds)
        return np.where(turned, self.penalty_time, times), turned

    def model_times(self, x: Coefficients) -> Tuple[np.ndarray, np.ndarray]:
        """Modelled time and turned flag per observation"""
        times, turned = self._trace_unique(self._check(x))
        if np.all(turned):
            raise AllBeamsTurnedError("every modelled beam turns for the proposed coefficients")
        return times[self.inverse], turned[self.inverse]

    def data_residuals(self, x: Coefficients) -> np.ndarray:
        times, _ = self.model_times(x)
        return (self.observed - times) / self.sqrt_n

    def misfit(self, x: Coefficients) -> float:
        r = self.data_residuals(x)
        return float(r @ r)

    def residual_vector(self, x: Coefficients, alpha: float) -> np.ndarray:
        x = self._check(x)
        return np.concatenate([self.data_residuals(x), np.sqrt(alpha) * x / self.basis.sigma])

    def cost(self, x: Coefficients, alpha: float) -> float:
        r = self.residual_vector(x, alpha)
        return float(r @ r)

    def jacobian(self, x: Coefficients, alpha: float, steps: np.ndarray) -> np.ndarray:
        """
        Central-difference Jacobian of the augmented residual vector.

        The prior block is exact (diagonal sqrt(alpha)/sigma_k). A coefficient
        whose perturbation turns a beam that is not turned at x has its step
        halved, up to MAX_STEP_HALVINGS times.
        """
        x = self._check(x)
        _, base_turned = self._trace_unique(x)
        jac = np.zeros((self.n_obs + self.n_eof, self.n_eof))
        for k in range(self.n_eof):
            h = float(steps[k])
            for _ in range(MAX_STEP_HALVINGS + 1):
                e = np.zeros(self.n_eof)
                e[k] = h
                t_plus, turned_plus = self._trace_unique(x + e)
                t_minus, turned_minus = self._trace_unique(x - e)
                if not np.any((turned_plus | turned_minus) & ~base_turned):
                    break
                h /= 2.0
            else:
                raise JacobianError(f"coefficient {k + 1}: perturbation keeps turning beams")
            dt = (t_plus - t_minus) / (2.0 * h)
            dt[base_turned | turned_plus | turned_minus] = 0.0
            jac[: self.n_obs, k] = -dt[self.inverse] / self.sqrt_n
        jac[self.n_obs:, :] = np.diag(np.sqrt(alpha) / self.basis.sigma)
        return jac


# ---------------------------------------------------------------------------
# Functional API
# ---------------------------------------------------------------------------

def cost(x: Coefficients, m: MeasurementSet, basis: EofBasis, alpha: float) -> float:
    """Regularised cost: mean squared travel-time residual plus alpha times the prior term"""
    return TravelTimeProblem(m, basis).cost(x, alpha)


def residual_vector(x: Coefficients, m: MeasurementSet, basis: EofBasis, alpha: float = 0.0) -> np.ndarray:
    return TravelTimeProblem(m, basis).residual_vector(x, alpha)


def jacobian_fd(
    x: Coefficients,
    m: MeasurementSet,
    basis: EofBasis,
    step: Optional[Union[float, np.ndarray]] = None,
    alpha: float = 0.0,
) -> np.ndarray:
    """Finite-difference Jacobian of ``residual_vector``; default steps max(1e-3, 1e-6 sigma_k)"""
    if step is None:
        steps = InversionConfig().fd_steps(basis)
    else:
        steps = np.broadcast_to(np.asarray(step, dtype=float), (basis.n_eof,))
    if np.any(steps <= 0):
        raise InversionError("finite-difference steps must be positive")
    return TravelTimeProblem(m, basis).jacobian(x, alpha, steps)


@dataclass
class GaussNewtonDiagnostics:
    iterations: int
    converged: bool
    reason: str
    initial_cost: float
    final_cost: float
    damping: float = 0.0            # final LM damping, normalised coordinates
    rejections: int = 0
    cost_history: List[float] = field(default_factory=list)


def _damped_step(jac: np.ndarray, r: np.ndarray, mu: float) -> Tuple[np.ndarray, float]:
    """
    Levenberg-Marquardt step for min ||r + J d||² + mu ||d||².

    Solved as the stacked least-squares problem [J; sqrt(mu) I] d = -[r; 0],
    which never forms J^T J. Returns the step and the cost reduction the
    linearised model predicts for it.
    """
    n = jac.shape[1]
    stacked = np.vstack([jac, np.sqrt(mu) * np.eye(n)])
    rhs = np.concatenate([-r, np.zeros(n)])
    d, _, _, _ = linalg.lstsq(stacked, rhs, check_finite=True)
    g = jac.T @ r
    return d, float(d @ (mu * d - g))


def gauss_newton(
    x0: Coefficients,
    m: MeasurementSet,
    basis: EofBasis,
    alpha: float,
    config: Optional[InversionConfig] = None,
    problem: Optional[TravelTimeProblem] = None,
) -> Tuple[np.ndarray, GaussNewtonDiagnostics]:
    """
    Gauss-Newton minimisation of the regularised cost with Levenberg-Marquardt damping.

    Steps are taken in prior-normalised coordinates z = x / sigma, so the
    damping term mu ||dz||² charges each coefficient relative to its own
    spread. mu starts at ``initial_damping`` times the largest diagonal of
    J^T J, shrinks (at most 3x) after a step whose cost reduction matches
    the linear model, and grows by 2, 4, 8, ... after rejected steps.

    Args:
        x0: Starting coefficients
        m: Measurements
        basis: EOF basis
        alpha: Regularisation weight (0 fits the data alone)
        config: Iteration controls
        problem: Prebuilt problem (reused across a sweep)

    Returns:
        (best coefficients, diagnostics). The returned iterate never has a
        higher cost than x0.
    """
    config = config or InversionConfig()
    problem = problem or TravelTimeProblem(m, basis, penalty_factor=config.turned_penalty_factor)
    steps = config.fd_steps(basis)
    sigma = basis.sigma
    root_k = np.sqrt(basis.grid.count)

    x = np.array(problem._check(x0), dtype=float)
    r = problem.residual_vector(x, alpha)
    c = float(r @ r)
    if not np.isfinite(c):
        raise NonFiniteCostError(f"cost at the starting point is {c}")

    diag = GaussNewtonDiagnostics(0, False, "max_iterations", c, c, cost_history=[c])
    mu: Optional[float] = None
    nu = 2.0
    for it in range(1, config.max_iterations + 1):
        diag.iterations = it
        if c == 0.0:
            diag.converged, diag.reason = True, "zero_cost"
            break
        jac = problem.jacobian(x, alpha, steps) * sigma[None, :]
        if mu is None:
            curvature = float(np.max(np.sum(jac * jac, axis=0)))
            mu = config.initial_damping * max(curvature, np.finfo(float).tiny)

        accepted = False
        first_step_rms = None
        for _ in range(config.max_rejections + 1):
            dz, predicted = _damped_step(jac, r, mu)
            dx = sigma * dz
            step_rms = float(np.linalg.norm(dx)) / root_k
            if first_step_rms is None:
                first_step_rms = step_rms
            trial = x + dx
            try:
                r_trial = problem.residual_vector(trial, alpha)
                c_trial = float(r_trial @ r_trial)
            except AllBeamsTurnedError:
                c_trial = np.inf
            if np.isfinite(c_trial) and c_trial < c:
                gain = (c - c_trial) / max(predicted, np.finfo(float).tiny)
                mu *= max(MIN_DAMPING_SHRINK, 1.0 - (2.0 * gain - 1.0) ** 3)
                nu = 2.0
                accepted = True
                break
            diag.rejections += 1
            mu *= nu
            nu *= 2.0

        diag.damping = mu
        if accepted:
            x, r, c = trial, r_trial, c_trial
            diag.cost_history.append(c)
            logger.debug(f"LM it={it} alpha={alpha:.3g} cost={c:.6e} mu={mu:.3e} step={step_rms:.3e} m/s")
            if step_rms < config.step_tolerance_mps:
                diag.converged, diag.reason = True, "step_tolerance"
                break
        else:
            if first_step_rms < config.step_tolerance_mps:
                diag.converged, diag.reason = True, "step_tolerance"
            else:
                diag.reason = "damping_floor"
            break

    diag.final_cost = c
    return x, diag


# ---------------------------------------------------------------------------
# Alpha sweep
# ---------------------------------------------------------------------------

@dataclass
class SweepEntry:
    alpha: float
    x: np.ndarray
    misfit: float
    prior: float
    iterations: int
    converged: bool
    reason: str = ""
    flagged: bool = False


@dataclass
class SweepResult:
    entries: List[SweepEntry]       # ascending alpha
    geometry: Geometry
    basis: EofBasis
    n_obs: int
    sigma_t: float

    @property
    def alphas(self) -> np.ndarray:
        return np.array([e.alpha for e in self.entries])

    @property
    def misfits(self) -> np.ndarray:
        return np.array([e.misfit for e in self.entries])

    @property
    def priors(self) -> np.ndarray:
        return np.array([e.prior for e in self.entries])

    @property
    def converged(self) -> np.ndarray:
        return np.array([e.converged for e in self.entries], dtype=bool)

    @property
    def coefficients(self) -> np.ndarray:
        """N_inv x N_EOF"""
        return np.vstack([e.x for e in self.entries])

    def __len__(self) -> int:
        return len(self.entries)

    def is_tikhonov_monotone(self, rtol: float = 1e-6) -> bool:
        """Misfit non-decreasing and prior non-increasing over converged entries"""
        ok = self.converged
        mis, pri = self.misfits[ok], self.priors[ok]
        scale_m = max(float(np.max(np.abs(mis))), np.finfo(float).tiny) if mis.size else 1.0
        scale_p = max(float(np.max(np.abs(pri))), np.finfo(float).tiny) if pri.size else 1.0
        return bool(np.all(np.diff(mis) >= -rtol * scale_m) and np.all(np.diff(pri) <= rtol * scale_p))

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame({
            "alpha": self.alphas,
            "misfit": self.misfits,
            "prior": self.priors,
            "iters": [e.iterations for e in self.entries],
            "converged": [int(e.converged) for e in self.entries],
        })
        coeffs = self.coefficients
        for k in range(coeffs.shape[1]):
            frame[f"x_{k + 1}"] = coeffs[:, k]
        return frame

    def to_csv(self, path: Union[str, Path]) -> None:
        self.to_frame().to_csv(path, index=False, float_format="%.17g", lineterminator="\n")


def sweep(
    m: MeasurementSet,
    basis: EofBasis,
    geometry: Optional[Geometry] = None,
    config: Optional[InversionConfig] = None,
) -> SweepResult:
    """
    Invert for every alpha of the grid.

    The chain starts at the largest alpha from x = 0 and warm-starts each
    smaller alpha from the previous solution. Failures are recorded as
    flagged entries; the sweep always returns one entry per grid value.
    """
    config = config or InversionConfig()
    geometry = geometry or m.geometry
    problem = TravelTimeProblem(m, basis, geometry, penalty_factor=config.turned_penalty_factor)
    grid = config.alpha_grid

    x = np.zeros(basis.n_eof)
    entries: List[SweepEntry] = []
    for alpha in grid[::-1]:
        try:
            x_hat, diag = gauss_newton(x, m, basis, float(alpha), config, problem)
            misfit = problem.misfit(x_hat)
            entry = SweepEntry(float(alpha), x_hat, misfit, log_prior(basis, x_hat),
                               diag.iterations, diag.converged, diag.reason)
            x = x_hat
        except (InversionError, AllBeamsTurnedError) as e:
            logger.warning(f"⚠️ Inversion failed at alpha={alpha:.3g}: {e}")
            entry = SweepEntry(float(alpha), x.copy(), float("nan"), log_prior(basis, x),
                               0, False, f"failed: {e}", flagged=True)
        entries.append(entry)

    entries.reverse()
    n_conv = sum(e.converged for e in entries)
    logger.debug(f"Sweep over {len(entries)} alphas: {n_conv} converged")
    return SweepResult(entries, geometry, basis, m.n_obs, m.sigma_t)
