# thalassa/tests/test_eof.py - EOF basis construction, projection, reconstruction and prior

import numpy as np
import pytest

from thalassa.eof import (
    EofBasis,
    build_basis,
    log_prior,
    project,
    reconstruct,
    sample_coefficients,
)
from thalassa.errors import (
    DegenerateBasisError,
    DimensionMismatchError,
    GridMismatchError,
    PersistenceError,
)
from thalassa.profiles import DepthGrid, ProfileMeta, ProfileSet, SoundSpeedProfile


def _set(grid, rows):
    return ProfileSet(grid, tuple(SoundSpeedProfile(grid, np.asarray(r, dtype=float), ProfileMeta()) for r in rows))


def _unit_basis(sigma):
    """Identity EOFs on a grid with one point per coefficient"""
    n = len(sigma)
    grid = DepthGrid(max(n, 2), 1.0)
    modes = np.eye(grid.count)[:, :n]
    return EofBasis(grid, np.full(grid.count, 1500.0), modes, np.asarray(sigma, dtype=float), n_training=10)


# --- build_basis ---

def test_identical_profiles_are_degenerate():
    grid = DepthGrid(4, 1.0)
    with pytest.raises(DegenerateBasisError):
        build_basis(_set(grid, [[1500, 1501, 1502, 1503]] * 5), 1)


def test_too_few_profiles():
    grid = DepthGrid(4, 1.0)
    with pytest.raises(DegenerateBasisError):
        build_basis(_set(grid, [[1500, 1501, 1502, 1503], [1501, 1501, 1502, 1503]]), 2)


def test_two_point_grid_matches_hand_eigendecomposition():
    # deviations (1, 0), (0, 2), (-1, -2): scatter matrix [[2, 2], [2, 8]],
    # eigenvalues 5 ± sqrt(13), eigenvectors along (2, lambda - 2)
    grid = DepthGrid(2, 10.0)
    train = _set(grid, [[1501, 1500], [1500, 1502], [1499, 1498]])
    basis = build_basis(train, 2)

    np.testing.assert_allclose(basis.mean, [1500.0, 1500.0], atol=1e-12)
    for k, lam in enumerate([5 + np.sqrt(13), 5 - np.sqrt(13)]):
        vec = np.array([2.0, lam - 2.0])
        vec /= np.linalg.norm(vec)
        np.testing.assert_allclose(basis.modes[:, k], vec, atol=1e-10)
        assert basis.sigma[k] == pytest.approx(np.sqrt(lam / 2.0), rel=1e-10)


def test_basis_matches_covariance_eigensolver(ocean, basis):
    data = ocean.speed_matrix()
    centered = data - data.mean(axis=1, keepdims=True)
    values, vectors = np.linalg.eigh(centered @ centered.T / (len(ocean) - 1))
    order = np.argsort(values)[::-1][: basis.n_eof]

    np.testing.assert_allclose(basis.sigma ** 2, values[order], rtol=1e-8)
    overlap = np.abs(np.sum(basis.modes * vectors[:, order], axis=0))
    np.testing.assert_allclose(overlap, 1.0, atol=1e-8)


def test_basis_invariants(basis):
    assert basis.n_eof == 5
    assert np.max(np.abs(basis.modes.T @ basis.modes - np.eye(5))) <= 1e-10
    assert np.all(np.diff(basis.sigma) <= 0)
    assert np.all(np.diff(basis.explained_variance) <= 0)
    for k in range(basis.n_eof):
        col = basis.modes[:, k]
        first = col[np.abs(col) > 1e-12 * np.max(np.abs(col))][0]
        assert first >= 0, f"EOF {k + 1} violates the sign convention"


def test_summary_lists_cumulative_variance(basis):
    rows = basis.summary()
    assert [r["eof"] for r in rows] == [1, 2, 3, 4, 5]
    assert rows[-1]["cumulative_explained_variance"] == pytest.approx(np.sum(basis.explained_variance))
    assert 0.0 < rows[-1]["cumulative_explained_variance"] <= 1.0


def test_truncated_keeps_leading_eofs(basis):
    two = basis.truncated(2)
    np.testing.assert_array_equal(two.modes, basis.modes[:, :2])
    np.testing.assert_array_equal(two.sigma, basis.sigma[:2])
    with pytest.raises(DimensionMismatchError):
        basis.truncated(6)


def test_basis_rejects_non_orthonormal_modes():
    grid = DepthGrid(2, 1.0)
    with pytest.raises(DegenerateBasisError):
        EofBasis(grid, np.full(2, 1500.0), np.array([[1.0], [1.0]]), np.array([1.0]), n_training=3)


# --- project / reconstruct ---

def test_project_mean_and_scaled_eof(basis):
    mean = SoundSpeedProfile(basis.grid, basis.mean)
    np.testing.assert_allclose(project(basis, mean), 0.0, atol=1e-10)

    shifted = SoundSpeedProfile(basis.grid, basis.mean + 2.0 * basis.modes[:, 0])
    np.testing.assert_allclose(project(basis, shifted), [2.0, 0, 0, 0, 0], atol=1e-10)


def test_full_rank_reconstruction_is_exact(ocean):
    # the synthetic ocean varies along 7 cosine modes, so its centered matrix has rank 7
    full = build_basis(ocean, 7)
    for profile in list(ocean)[:20]:
        back = reconstruct(full, project(full, profile))
        np.testing.assert_allclose(back.speeds, profile.speeds, atol=1e-8)


def test_reconstruct_examples(basis):
    np.testing.assert_allclose(reconstruct(basis, np.zeros(5)).speeds, basis.mean)
    x = np.array([basis.sigma[0], 0, 0, 0, 0])
    np.testing.assert_allclose(reconstruct(basis, x).speeds, basis.mean + basis.sigma[0] * basis.modes[:, 0])
    assert reconstruct(basis, x).meta.synthetic


def test_project_reconstruct_round_trip_on_coefficients(basis, rng):
    for _ in range(10):
        x = rng.normal(size=5) * basis.sigma
        np.testing.assert_allclose(project(basis, reconstruct(basis, x)), x, atol=1e-10)


def test_projection_is_affine(ocean, basis):
    p, q = ocean[0], ocean[1]
    a = 0.3
    mix = SoundSpeedProfile(basis.grid, a * p.speeds + (1 - a) * q.speeds)
    np.testing.assert_allclose(project(basis, mix), a * project(basis, p) + (1 - a) * project(basis, q), atol=1e-10)


def test_length_and_grid_mismatch(basis):
    with pytest.raises(DimensionMismatchError):
        reconstruct(basis, np.zeros(4))
    with pytest.raises(GridMismatchError):
        project(basis, SoundSpeedProfile(DepthGrid(3, 1.0), np.full(3, 1500.0)))


# --- log_prior / sample_coefficients ---

def test_log_prior_examples():
    unit = _unit_basis([1.0, 1.0])
    assert log_prior(unit, [0.0, 0.0]) == 0.0
    assert log_prior(unit, [1.0, 2.0]) == pytest.approx(5.0)


def test_log_prior_at_sigma_is_n_eof(basis):
    assert log_prior(basis, basis.sigma) == pytest.approx(5.0, rel=1e-12)


def test_sample_coefficients_is_reproducible(basis):
    a = sample_coefficients(basis, np.random.default_rng(3))
    b = sample_coefficients(basis, np.random.default_rng(3))
    np.testing.assert_array_equal(a, b)


def test_sample_coefficients_statistics():
    small = _unit_basis([2.0, 1.0])
    wide = _unit_basis([4.0, 2.0])
    gen = np.random.default_rng(99)
    draws = np.array([sample_coefficients(small, gen) for _ in range(100_000)])
    np.testing.assert_allclose(draws.std(axis=0), small.sigma, rtol=0.02)

    gen_a, gen_b = np.random.default_rng(5), np.random.default_rng(5)
    for _ in range(10):
        np.testing.assert_allclose(sample_coefficients(wide, gen_b), 2.0 * sample_coefficients(small, gen_a))


# --- persistence ---

def test_save_and_load_reproduce_the_basis(tmp_path, basis):
    path = tmp_path / "eof" / "basis.npz"
    basis.save(path)
    loaded = EofBasis.load(path)

    assert loaded.grid == basis.grid and loaded.n_training == basis.n_training
    np.testing.assert_array_equal(loaded.mean, basis.mean)
    np.testing.assert_array_equal(loaded.modes, basis.modes)
    np.testing.assert_array_equal(loaded.sigma, basis.sigma)


def test_load_missing_basis(tmp_path):
    with pytest.raises(PersistenceError):
        EofBasis.load(tmp_path / "nope.npz")
