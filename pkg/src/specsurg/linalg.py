"""Regularized dense complex linear-algebra primitives.

All routines operate on small dense complex matrices (the channel count n is
2-8 in practice).  Rank decisions are made relative to the largest singular
value; decisions that fall within a factor of 10 of the threshold raise a
RankAmbiguityWarning so that downstream multiplicity logic never mis-ranks
silently.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

RANK_TOL = 1e-8  # relative singular-value threshold
HERM_TOL = 1e-12  # relative hermiticity slack
POS_TOL = 1e-12  # relative positivity slack


class LinAlgInputError(ValueError):
    """Invalid input (non-finite entries, wrong shape, empty span...)."""


class NotPositiveError(ValueError):
    """A matrix that must be positive definite is not."""


class RankAmbiguityWarning(UserWarning):
    """A singular value fell within a factor 10 of the rank threshold."""


@dataclass(frozen=True)
class OrthProjection:
    """An orthogonal projection matrix together with its rank."""

    matrix: np.ndarray
    rank: int

    def __post_init__(self):
        object.__setattr__(self, "matrix", np.asarray(self.matrix, dtype=complex))

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


def as_square(M) -> np.ndarray:
    M = np.asarray(M, dtype=complex)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise LinAlgInputError(f"expected a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M.real)) or not np.all(np.isfinite(M.imag)):
        raise LinAlgInputError("matrix has non-finite entries")
    return M


def is_hermitian(M, tol: float = HERM_TOL) -> bool:
    M = np.asarray(M, dtype=complex)
    scale = max(1.0, float(np.linalg.norm(M)))
    return float(np.linalg.norm(M - M.conj().T)) <= tol * scale


def hermitize(M) -> np.ndarray:
    """Symmetrize a matrix that is hermitian up to numerical drift."""
    M = np.asarray(M, dtype=complex)
    return 0.5 * (M + M.conj().T)


def _check_ambiguity(s: np.ndarray, cut: float) -> None:
    near = (s > cut / 10.0) & (s < cut * 10.0)
    if np.any(near):
        warnings.warn(
            "singular value within a factor 10 of the rank threshold; "
            "rank decision may be unstable",
            RankAmbiguityWarning,
            stacklevel=3,
        )


def pinv(M, rank_tol: float = RANK_TOL) -> np.ndarray:
    """Moore-Penrose inverse with an explicit relative rank threshold."""
    M = as_square(M)
    U, s, Vh = np.linalg.svd(M)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros_like(M.conj().T)
    cut = rank_tol * s[0]
    _check_ambiguity(s, cut)
    inv = np.where(s > cut, 1.0 / np.where(s > cut, s, 1.0), 0.0)
    return (Vh.conj().T * inv) @ U.conj().T


def matrix_rank(M, rank_tol: float = RANK_TOL) -> int:
    M = as_square(M)
    s = np.linalg.svd(M, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > rank_tol * s[0]))


def herm_sqrt_inv(H, pos_tol: float = POS_TOL):
    """Unique positive square root of a positive matrix and its inverse.

    Returns (H^{1/2}, H^{-1/2}); raises NotPositiveError if an eigenvalue is
    below pos_tol * ||H||.
    """
    H = as_square(H)
    scale = float(np.linalg.norm(H))
    if not is_hermitian(H):
        raise LinAlgInputError("matrix is not hermitian")
    w, U = np.linalg.eigh(hermitize(H))
    if np.any(w <= pos_tol * max(scale, 1e-300)):
        raise NotPositiveError(
            f"matrix is not positive definite (min eigenvalue {w.min():.6e})"
        )
    root = (U * np.sqrt(w)) @ U.conj().T
    inv_root = (U / np.sqrt(w)) @ U.conj().T
    return hermitize(root), hermitize(inv_root)


def projector_from_span(vectors) -> OrthProjection:
    """Orthogonal projection onto the span of the given complex vectors."""
    cols = [np.asarray(v, dtype=complex).reshape(-1) for v in vectors]
    if not cols:
        raise LinAlgInputError("empty span")
    V = np.column_stack(cols)
    if not np.all(np.isfinite(V.real)) or not np.all(np.isfinite(V.imag)):
        raise LinAlgInputError("span vector has non-finite entries")
    U, s, _ = np.linalg.svd(V, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        raise LinAlgInputError("all span vectors are zero")
    cut = RANK_TOL * s[0]
    _check_ambiguity(s, cut)
    r = int(np.count_nonzero(s > cut))
    if r == 0:
        raise LinAlgInputError("all span vectors are zero")
    B = U[:, :r]
    return OrthProjection(hermitize(B @ B.conj().T), r)


def range_projector(M, rank_tol: float = RANK_TOL) -> OrthProjection:
    """Orthogonal projection onto the column space of M."""
    M = as_square(M)
    U, s, _ = np.linalg.svd(M)
    if s.size == 0 or s[0] == 0.0:
        return OrthProjection(np.zeros_like(M), 0)
    cut = rank_tol * s[0]
    _check_ambiguity(s, cut)
    r = int(np.count_nonzero(s > cut))
    B = U[:, :r]
    return OrthProjection(hermitize(B @ B.conj().T), r)


def kernel_projector(M, rank_tol: float = RANK_TOL) -> OrthProjection:
    """Orthogonal projection onto the numerical null space of M."""
    M = as_square(M)
    _, s, Vh = np.linalg.svd(M)
    n = M.shape[0]
    if s.size == 0 or s[0] == 0.0:
        return OrthProjection(np.eye(n, dtype=complex), n)
    cut = rank_tol * s[0]
    _check_ambiguity(s, cut)
    null_rows = Vh[s <= cut, :]
    r = null_rows.shape[0]
    if r == 0:
        return OrthProjection(np.zeros((n, n), dtype=complex), 0)
    B = null_rows.conj().T
    return OrthProjection(hermitize(B @ B.conj().T), r)


def rank_one_proj_2x2(beta: float, gamma: float, sign: int = +1) -> OrthProjection:
    """The general 2x2 rank-one orthogonal projection.

    P = [[1/2 ± s, beta + i gamma], [beta - i gamma, 1/2 ∓ s]] with
    s = sqrt(1/4 - beta^2 - gamma^2); requires beta^2 + gamma^2 <= 1/4.
    """
    if sign not in (+1, -1):
        raise LinAlgInputError("sign must be +1 or -1")
    r2 = beta * beta + gamma * gamma
    if r2 > 0.25 + 1e-15:
        raise LinAlgInputError("beta^2 + gamma^2 must be <= 1/4")
    s = np.sqrt(max(0.0, 0.25 - r2))
    off = beta + 1j * gamma
    P = np.array(
        [[0.5 + sign * s, off], [np.conj(off), 0.5 - sign * s]], dtype=complex
    )
    return OrthProjection(P, 1)


def projection_residuals(P) -> dict:
    """Residuals of the orthogonal-projection identities for diagnostics."""
    P = as_square(P)
    return {
        "idempotent": float(np.linalg.norm(P @ P - P)),
        "hermitian": float(np.linalg.norm(P - P.conj().T)),
        "trace_int": float(abs(np.trace(P).real - round(np.trace(P).real))),
    }
