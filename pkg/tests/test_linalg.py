import numpy as np
import pytest

from specsurg.linalg import (
    LinAlgInputError,
    NotPositiveError,
    as_square,
    herm_sqrt_inv,
    hermitize,
    is_hermitian,
    kernel_projector,
    matrix_rank,
    pinv,
    projector_from_span,
    range_projector,
    rank_one_proj_2x2,
)


def _random_complex(rng, shape):
    return rng.normal(size=shape) + 1j * rng.normal(size=shape)


def test_pinv_inverts_nonsingular():
    rng = np.random.default_rng(0)
    M = _random_complex(rng, (3, 3)) + 3 * np.eye(3)
    assert np.allclose(pinv(M) @ M, np.eye(3), atol=1e-12)


def test_pinv_rank_deficient():
    M = np.array([[1.0, 1.0], [1.0, 1.0]])
    X = pinv(M)
    assert np.allclose(M @ X @ M, M, atol=1e-12)
    assert np.allclose(X, M / 4.0, atol=1e-12)


def test_matrix_rank_with_tolerance():
    M = np.diag([1.0, 1e-12, 0.0])
    assert matrix_rank(M) == 1


def test_hermitize_and_checks():
    rng = np.random.default_rng(1)
    M = _random_complex(rng, (3, 3))
    H = hermitize(M)
    assert is_hermitian(H)
    assert not is_hermitian(M + np.diag([1j, 0, 0]))


def test_herm_sqrt_inv_roundtrip():
    rng = np.random.default_rng(2)
    R = _random_complex(rng, (3, 3))
    H = hermitize(R.conj().T @ R + 0.5 * np.eye(3))
    root, inv_root = herm_sqrt_inv(H)
    assert np.allclose(root @ root, H, atol=1e-10)
    assert np.allclose(root @ inv_root, np.eye(3), atol=1e-10)


def test_herm_sqrt_inv_rejects_indefinite():
    with pytest.raises(NotPositiveError):
        herm_sqrt_inv(np.diag([1.0, -1.0]))


def test_projector_from_span():
    v = np.array([1.0, 1j]) / np.sqrt(2)
    P = projector_from_span([v])
    assert P.rank == 1
    M = P.matrix
    assert np.allclose(M @ M, M, atol=1e-12)
    assert np.allclose(M.conj().T, M, atol=1e-12)
    assert np.allclose(P.matrix @ v, v, atol=1e-12)


def test_range_and_kernel_projectors_complement():
    M = np.array([[1.0, 2.0], [2.0, 4.0]])
    R = range_projector(M)
    K = kernel_projector(M)
    assert R.rank == 1 and K.rank == 1
    assert np.allclose(R.matrix + K.matrix, np.eye(2), atol=1e-12)
    assert np.allclose(M @ K.matrix, 0.0, atol=1e-12)


def test_rank_one_projection_parametrization():
    for beta, gamma, sign in ((0.1, 0.2, +1), (0.3, -0.1, -1), (0.0, 0.5, +1)):
        P = rank_one_proj_2x2(beta, gamma, sign).matrix
        assert np.allclose(P @ P, P, atol=1e-12)
        assert np.allclose(P.conj().T, P, atol=1e-12)
        assert abs(np.trace(P) - 1.0) < 1e-12
        assert abs(P[0, 1] - (beta + 1j * gamma)) < 1e-12


def test_rank_one_projection_rejects_large_offdiagonal():
    with pytest.raises(LinAlgInputError):
        rank_one_proj_2x2(0.6, 0.3, +1)


def test_as_square_rejects_nonsquare():
    with pytest.raises(LinAlgInputError):
        as_square(np.ones((2, 3)))
