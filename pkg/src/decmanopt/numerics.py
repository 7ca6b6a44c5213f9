"""Dense linear-algebra kernels used by every other module.

Thin wrappers around LAPACK (via numpy) that pin down conventions and
tolerances: thin SVD, symmetric eigendecomposition, SPD inverse square
root, minimum-norm least squares, and a small symmetric Lyapunov-type
solver.  All functions are pure and deterministic: identical input bits
give identical output bits.
"""

import numpy as np

from .errors import InvalidInputError, SingularityError

# Relative eigenvalue threshold below which a matrix is treated as rank
# deficient / not positive definite.
RANK_RTOL = 1e-12

# Relative asymmetry tolerated by sym_eig before rejecting the input.
SYM_RTOL = 1e-8


def _require_finite(m, name="matrix"):
    m = np.asarray(m, dtype=float)
    if not np.all(np.isfinite(m)):
        raise InvalidInputError(f"{name} contains NaN or Inf")
    return m


def thin_svd(m):
    """Thin singular value decomposition of a p-by-q matrix, p >= q.

    Returns (u, s, v) with u of shape (p, q), s the q singular values in
    descending order, and v of shape (q, q), such that u @ diag(s) @ v.T
    reconstructs the input.
    """
    m = _require_finite(m)
    if m.ndim != 2 or m.shape[0] < m.shape[1]:
        raise InvalidInputError(f"thin_svd expects p >= q, got shape {m.shape}")
    u, s, vt = np.linalg.svd(m, full_matrices=False)
    return u, s, vt.T


def sym_eig(m):
    """Eigendecomposition of a symmetric matrix.

    Returns (w, v) with eigenvalues w ascending and orthonormal eigenvector
    columns v.  The input is symmetrized internally; asymmetry beyond
    ``SYM_RTOL`` relative to its norm is rejected.
    """
    m = _require_finite(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise InvalidInputError(f"sym_eig expects a square matrix, got shape {m.shape}")
    scale = np.linalg.norm(m)
    if scale > 0 and np.linalg.norm(m - m.T) > SYM_RTOL * scale:
        raise InvalidInputError("matrix is not symmetric within tolerance")
    w, v = np.linalg.eigh(0.5 * (m + m.T))
    return w, v


def spd_inverse_sqrt(m):
    """Inverse square root R of an SPD matrix, satisfying R @ m @ R = I."""
    w, v = sym_eig(m)
    if w[-1] <= 0 or w[0] <= RANK_RTOL * w[-1]:
        raise SingularityError("matrix is not positive definite within tolerance")
    return (v / np.sqrt(w)) @ v.T


def least_squares(a, b):
    """Minimum-norm minimizer of ||a @ x - b||.

    Rank-deficient systems are handled by the minimum-norm solution, with
    singular values below 1e-10 times the largest treated as zero.
    """
    a = _require_finite(a, "lhs")
    b = _require_finite(b, "rhs")
    x, _, _, _ = np.linalg.lstsq(a, b, rcond=1e-10)
    return x


def lyapunov_solve(m, c):
    """Symmetric solution S of m @ S + S @ m = 2 c, for SPD m and symmetric c.

    Solved in the eigenbasis of m, where the equation decouples entrywise to
    S_ij = 2 C_ij / (w_i + w_j).
    """
    c = _require_finite(c, "rhs")
    w, v = sym_eig(m)
    if w[-1] <= 0 or w[0] <= RANK_RTOL * w[-1]:
        raise SingularityError("coefficient matrix is not positive definite")
    ct = v.T @ (0.5 * (c + c.T)) @ v
    st = 2.0 * ct / np.add.outer(w, w)
    s = v @ st @ v.T
    return 0.5 * (s + s.T)
