import math

import numpy as np
import pytest

from core.errors import DimensionMismatch, InvalidArgument, NotPositiveDefinite, ZeroMatrix
from core.linalg import mat_vec, pinv_solve, solve_spd, spectral_radius, sym_eig_extremes


def test_mat_vec_examples():
    assert np.array_equal(mat_vec(np.eye(2), np.array([3.0, 4.0])), [3.0, 4.0])
    np.testing.assert_allclose(mat_vec(np.array([[0, 0.1], [-0.1, 0]]), np.array([1.0, 0.0])), [0.0, -0.1])
    assert np.array_equal(mat_vec(np.array([[1.0, 1.0], [-1.0, 1.0]]), np.array([1.0, 1.0])), [2.0, 0.0])


def test_mat_vec_rejects_bad_shapes_and_values():
    with pytest.raises(DimensionMismatch):
        mat_vec(np.eye(2), np.ones(3))
    with pytest.raises(InvalidArgument):
        mat_vec(np.eye(2), np.array([1.0, np.nan]))


def test_solve_spd_examples(rng):
    np.testing.assert_allclose(solve_spd(np.eye(3), np.array([1.0, 2, 3])), [1, 2, 3])
    np.testing.assert_allclose(solve_spd(np.diag([2.0, 4.0]), np.array([2.0, 4.0])), [1, 1])
    for _ in range(20):
        m = rng.standard_normal((4, 4))
        a = m.T @ m + np.eye(4)
        b = rng.standard_normal(4)
        assert np.linalg.norm(a @ solve_spd(a, b) - b) <= 1e-9 * np.linalg.norm(b)


def test_solve_spd_rejects_indefinite():
    with pytest.raises(NotPositiveDefinite):
        solve_spd(np.diag([1.0, -1.0]), np.ones(2))
    with pytest.raises(NotPositiveDefinite):
        solve_spd(np.array([[1.0, 0.5], [0.0, 1.0]]), np.ones(2))
    f = np.array([0.3, -1.7, 2.2])
    with pytest.raises(NotPositiveDefinite):
        solve_spd(np.outer(f, f), np.ones(3))


def test_pinv_solve_examples():
    np.testing.assert_allclose(pinv_solve(np.eye(2), np.array([1.0, 2.0])), [1, 2])
    np.testing.assert_allclose(pinv_solve(np.array([[1.0, 0], [0, 0]]), np.array([3.0, 4.0])), [3, 0])
    with pytest.raises(ZeroMatrix):
        pinv_solve(np.zeros((2, 2)), np.ones(2))


def test_pinv_matches_normal_equations(rng):
    for _ in range(100):
        j = rng.standard_normal((5, 3))
        b = rng.standard_normal(5)
        oracle = np.linalg.solve(j.T @ j, j.T @ b)
        assert np.linalg.norm(pinv_solve(j, b) - oracle) <= 1e-8 * np.linalg.norm(oracle)


@pytest.mark.parametrize("eta", [0.01, 0.1, 1.0])
def test_spectral_radius_of_scaled_rotation(eta):
    assert abs(spectral_radius(np.array([[1.0, -eta], [eta, 1.0]])) - math.sqrt(1 + eta * eta)) <= 1e-9


def test_spectral_radius_edge_cases(rng):
    assert spectral_radius(np.eye(2)) == pytest.approx(1.0)
    assert spectral_radius(np.zeros((3, 3))) == 0.0
    m = rng.standard_normal((4, 4))
    assert spectral_radius(m) == pytest.approx(np.linalg.norm(m, 2), rel=1e-6)


def test_sym_eig_extremes_ignores_skew_part():
    lo, hi = sym_eig_extremes(np.array([[0.75, -4.0], [4.0, 0.75]]))
    assert lo == pytest.approx(0.75)
    assert hi == pytest.approx(0.75)
