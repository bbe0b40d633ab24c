# thalassa/tests/test_invert.py - Regularised cost, finite-difference Jacobian, Gauss-Newton and alpha sweeps

import numpy as np
import pytest

from thalassa.eof import EofBasis, log_prior, reconstruct, sample_coefficients
from thalassa.errors import AllBeamsTurnedError, DimensionMismatchError, InversionError, NonFiniteCostError
from thalassa.forward import Geometry, LayeredRayTracer
from thalassa.invert import (
    InversionConfig,
    TravelTimeProblem,
    cost,
    gauss_newton,
    jacobian_fd,
    residual_vector,
    sweep,
)
from thalassa.profiles import DepthGrid, rms_error
from thalassa.synth import MeasurementSet, simulate_measurements


def _one_layer_basis():
    """Single EOF moving the speed of the only traversed layer, sigma = 2"""
    grid = DepthGrid(2, 150.0)
    return EofBasis(grid, np.array([1500.0, 1500.0]), np.array([[1.0], [0.0]]), np.array([2.0]), n_training=2)


def _noiseless(basis, x, geometry, n_ping=1):
    truth = reconstruct(basis, x, profile_id="truth")
    return simulate_measurements(truth, geometry, 0.0, n_ping, np.random.default_rng(0))


# --- cost / residual_vector ---

def test_cost_by_hand():
    basis = _one_layer_basis()
    angles = np.array([0.0, 0.3])
    tracer = LayeredRayTracer(basis.grid, Geometry(150.0, tuple(angles)))
    model, _, _ = tracer.trace(np.array([1501.0, 1500.0]))
    m = MeasurementSet(
        geometry=Geometry(150.0, tuple(angles)),
        pings=np.zeros(2, dtype=int),
        angles=angles,
        times=model + np.array([1e-4, 2e-4]),
        sigma_t=0.0,
    )
    x = np.array([1.0])

    assert cost(x, m, basis, 1.0) == pytest.approx((1e-8 + 4e-8) / 2 + 0.25, rel=1e-12)
    np.testing.assert_allclose(
        residual_vector(x, m, basis, 1.0), [1e-4 / np.sqrt(2), 2e-4 / np.sqrt(2), 0.5], rtol=1e-9, atol=0
    )


def test_cost_is_zero_at_the_truth(basis, geometry):
    x = np.array([1.0, -0.5, 0.4, 0.2, -0.1])
    m = _noiseless(basis, x, geometry)
    assert cost(x, m, basis, 0.0) < 1e-28
    np.testing.assert_allclose(residual_vector(x, m, basis), 0.0, atol=1e-14)


def test_cost_at_zero_does_not_depend_on_alpha(ocean, basis, geometry, rng):
    m = simulate_measurements(ocean[0], geometry, 1e-5, 1, rng)
    x0 = np.zeros(basis.n_eof)
    assert cost(x0, m, basis, 1e-12) == cost(x0, m, basis, 1e6)
    assert cost(x0, m, basis, 1.0) >= 0.0


def test_residual_norm_equals_cost(ocean, basis, geometry, rng):
    m = simulate_measurements(ocean[4], geometry, 1e-5, 2, rng)
    for _ in range(5):
        x = rng.normal(size=basis.n_eof) * basis.sigma
        alpha = 10.0 ** rng.uniform(-14, -8)
        r = residual_vector(x, m, basis, alpha)
        assert r.size == m.n_obs + basis.n_eof
        assert float(r @ r) == pytest.approx(cost(x, m, basis, alpha), rel=1e-12)


def test_wrong_coefficient_length(ocean, basis, geometry, rng):
    m = simulate_measurements(ocean[0], geometry, 0.0, 1, rng)
    with pytest.raises(DimensionMismatchError):
        cost(np.zeros(3), m, basis, 1.0)


def _step_basis(grid):
    """One EOF raising every speed below 50 m; the returned x gives a 100 m/s step"""
    below = grid.depths >= 50.0
    mode = below / np.sqrt(below.sum())
    basis = EofBasis(grid, np.full(grid.count, 1450.0), mode[:, None], np.array([50.0]), n_training=3)
    return basis, np.array([100.0 * np.sqrt(below.sum())])


def test_turned_model_beams_get_a_penalty_time(grid):
    basis, step = _step_basis(grid)
    m = _noiseless(basis, np.array([0.0]), Geometry(300.0, tuple(np.deg2rad([0.0, 80.0]))))

    times, turned = TravelTimeProblem(m, basis).model_times(step)
    assert list(turned) == [False, True]
    assert times[1] == pytest.approx(3.0 * np.max(m.times))


def test_all_model_beams_turned(grid):
    basis, step = _step_basis(grid)
    m = _noiseless(basis, np.array([0.0]), Geometry(300.0, (np.deg2rad(80.0),)))
    with pytest.raises(AllBeamsTurnedError):
        cost(step, m, basis, 1.0)


def test_non_finite_start_is_rejected(basis, geometry):
    m = _noiseless(basis, np.zeros(basis.n_eof), geometry)
    with pytest.raises(NonFiniteCostError):
        gauss_newton(np.ones(basis.n_eof), m, basis, np.inf)


# --- jacobian_fd ---

def test_vertical_column_matches_analytic_derivative(basis):
    geometry = Geometry(300.0, (0.0,))
    x = np.array([0.5, 0.2, -0.3, 0.1, 0.0])
    m = _noiseless(basis, x, geometry)
    jac = jacobian_fd(x, m, basis)

    speeds = reconstruct(basis, x).speeds[:-1]
    # r = T - 2 sum(h / c); dr/dx_k = 2 sum(h U_k / c^2)
    analytic = 2.0 * np.sum(2.0 * basis.modes[:-1, :] / speeds[:, None] ** 2, axis=0)
    np.testing.assert_allclose(jac[0], analytic, rtol=1e-6)


def test_prior_block_is_exact(ocean, basis, geometry, rng):
    m = simulate_measurements(ocean[0], geometry, 1e-5, 1, rng)
    alpha = 4e-12
    jac = jacobian_fd(np.zeros(basis.n_eof), m, basis, alpha=alpha)
    np.testing.assert_array_equal(jac[m.n_obs:], np.diag(np.sqrt(alpha) / basis.sigma))
    assert jac.shape == (m.n_obs + basis.n_eof, basis.n_eof)


def test_gradient_vanishes_at_noiseless_truth(basis, geometry):
    x = np.array([1.2, -0.8, 0.5, 0.3, -0.2])
    m = _noiseless(basis, x, geometry)
    jac = jacobian_fd(x, m, basis)
    r = residual_vector(x, m, basis)
    assert np.max(np.abs(jac.T @ r)) < 1e-18


def test_jacobian_converges_at_second_order(ocean, basis, geometry):
    m = simulate_measurements(ocean[0], geometry, 0.0, 1, np.random.default_rng(1))
    gen = np.random.default_rng(50)
    ratios = []
    for _ in range(50):
        x = gen.normal(size=basis.n_eof) * basis.sigma
        j_h = jacobian_fd(x, m, basis, step=4.0)[: m.n_obs]
        j_h2 = jacobian_fd(x, m, basis, step=2.0)[: m.n_obs]
        j_h4 = jacobian_fd(x, m, basis, step=1.0)[: m.n_obs]
        ratios.append(np.linalg.norm(j_h - j_h2) / np.linalg.norm(j_h2 - j_h4))
    assert 3.5 <= np.median(ratios) <= 4.5


def test_nonpositive_step_is_rejected(ocean, basis, geometry, rng):
    m = simulate_measurements(ocean[0], geometry, 0.0, 1, rng)
    with pytest.raises(InversionError):
        jacobian_fd(np.zeros(basis.n_eof), m, basis, step=0.0)


# --- gauss_newton ---

def test_start_at_truth_stops_immediately(basis, geometry):
    x = np.array([1.0, 0.5, -0.5, 0.25, 0.1])
    m = _noiseless(basis, x, geometry)
    x_hat, diag = gauss_newton(x, m, basis, 0.0)
    assert diag.converged and diag.iterations <= 2
    np.testing.assert_allclose(x_hat, x, atol=1e-9)


def test_recovers_in_span_truth_from_zero(basis2, geometry):
    x_true = np.array([2.5, -1.5])
    m = _noiseless(basis2, x_true, geometry)
    x_hat, diag = gauss_newton(np.zeros(2), m, basis2, 1e-20)

    assert diag.converged, diag.reason
    err = rms_error(reconstruct(basis2, x_hat), reconstruct(basis2, x_true))
    assert err < 1e-3

    # exhaustive grid search over the two coefficients finds nothing better
    problem = TravelTimeProblem(m, basis2)
    best = min(
        (problem.cost(np.array([a, b]), 1e-20), a, b)
        for a in np.linspace(x_true[0] - 0.5, x_true[0] + 0.5, 21)
        for b in np.linspace(x_true[1] - 0.5, x_true[1] + 0.5, 21)
    )
    assert problem.cost(x_hat, 1e-20) <= best[0] + 1e-18


def test_recovers_sampled_truths_with_five_eofs(basis, geometry):
    gen = np.random.default_rng(31)
    for _ in range(5):
        x_true = sample_coefficients(basis, gen)
        m = _noiseless(basis, x_true, geometry)
        x_hat, diag = gauss_newton(np.zeros(basis.n_eof), m, basis, 0.0)
        err = rms_error(reconstruct(basis, x_hat), reconstruct(basis, x_true))
        assert err <= 0.01, f"{diag.reason} after {diag.iterations} iterations: {err:.4f} m/s"


def test_damping_relaxes_on_good_steps(basis, geometry):
    x_true = np.array([20.0, -8.0, 4.0, 2.0, -1.0])
    m = _noiseless(basis, x_true, geometry)
    config = InversionConfig()
    x_hat, diag = gauss_newton(np.zeros(basis.n_eof), m, basis, 0.0, config)
    problem = TravelTimeProblem(m, basis)
    jac = problem.jacobian(np.zeros(basis.n_eof), 0.0, config.fd_steps(basis)) * basis.sigma
    start = config.initial_damping * np.max(np.sum(jac * jac, axis=0))
    assert diag.damping < start
    assert diag.cost_history[-1] < 1e-6 * diag.cost_history[0]


def test_large_alpha_pins_coefficients_to_zero(ocean, basis, geometry, rng):
    m = simulate_measurements(ocean[0], geometry, 1e-5, 1, rng)
    x_hat, _ = gauss_newton(np.zeros(basis.n_eof), m, basis, 1e6)
    assert np.max(np.abs(x_hat / basis.sigma)) < 1e-6


def test_never_worse_than_the_start(ocean, basis, geometry, rng):
    m = simulate_measurements(ocean[7], geometry, 1e-5, 1, rng)
    problem = TravelTimeProblem(m, basis)
    for alpha in (1e-16, 1e-12, 1e-8):
        x0 = rng.normal(size=basis.n_eof) * basis.sigma
        x_hat, diag = gauss_newton(x0, m, basis, alpha, problem=problem)
        assert problem.cost(x_hat, alpha) <= problem.cost(x0, alpha)
        assert diag.final_cost <= diag.initial_cost
        assert all(b < a for a, b in zip(diag.cost_history, diag.cost_history[1:]))


def test_iteration_cap(ocean, basis, geometry, rng):
    m = simulate_measurements(ocean[7], geometry, 1e-5, 1, rng)
    _, diag = gauss_newton(np.zeros(basis.n_eof), m, basis, 1e-14, InversionConfig(max_iterations=1))
    assert diag.iterations == 1


# --- sweep ---

def test_sweep_is_ordered_and_monotone(ocean, basis, geometry, rng):
    config = InversionConfig()
    sigma_t = 1.3333e-5
    m = simulate_measurements(ocean[10], geometry, sigma_t, 1, rng)
    result = sweep(m, basis, geometry, config)

    np.testing.assert_array_equal(result.alphas, config.alpha_grid)
    assert len(result) == 17
    assert result.converged.all()
    assert result.is_tikhonov_monotone(rtol=1e-6)
    assert result.n_obs == m.n_obs and result.sigma_t == sigma_t


def test_sweep_priors_match_log_prior(ocean, basis, geometry, rng):
    m = simulate_measurements(ocean[11], geometry, 1e-5, 1, rng)
    result = sweep(m, basis, config=InversionConfig(alphas=[1e-14, 1e-12, 1e-10]))
    for entry in result.entries:
        assert entry.prior == pytest.approx(log_prior(basis, entry.x), rel=1e-12)


def test_sweep_frame_columns(ocean, basis, geometry, rng, tmp_path):
    m = simulate_measurements(ocean[12], geometry, 1e-5, 1, rng)
    result = sweep(m, basis, config=InversionConfig(alphas=[1e-14, 1e-12, 1e-10]))
    result.to_csv(tmp_path / "sweep.csv")
    header = (tmp_path / "sweep.csv").read_text().splitlines()[0]
    assert header == "alpha,misfit,prior,iters,converged,x_1,x_2,x_3,x_4,x_5"


# --- InversionConfig ---

def test_default_alpha_grid():
    grid = InversionConfig().alpha_grid
    assert grid.size == 17
    assert grid[0] == pytest.approx(1e-16) and grid[-1] == pytest.approx(1e-8)
    np.testing.assert_allclose(np.diff(np.log10(grid)), 0.5)


@pytest.mark.parametrize("changes", [
    {"alphas": [1e-10, 1e-12, 1e-8]},
    {"alphas": [1e-12, 1e-10]},
    {"alphas": [0.0, 1e-10, 1e-8]},
    {"initial_damping": 0.0},
    {"max_rejections": 0},
    {"max_iterations": 0},
])
def test_config_validation(changes):
    with pytest.raises(ValueError):
        InversionConfig(**changes)


def test_fd_steps_follow_sigma(basis):
    steps = InversionConfig().fd_steps(basis)
    np.testing.assert_array_equal(steps, np.maximum(1e-3, 1e-6 * basis.sigma))


def test_sampled_truth_recovery_with_noise(basis, geometry):
    gen = np.random.default_rng(77)
    truth = reconstruct(basis, sample_coefficients(basis, gen))
    m = simulate_measurements(truth, geometry, 6.6667e-6, 1, gen)
    result = sweep(m, basis)
    errors = [rms_error(reconstruct(basis, e.x), truth) for e in result.entries if e.converged]
    assert min(errors) < rms_error(reconstruct(basis, np.zeros(basis.n_eof)), truth)
