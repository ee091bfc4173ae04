"""Dense symmetric linear algebra used by the cost terms and metrics.

The eigen-solver is a cyclic Jacobi method.  Rotations are scheduled in
round-robin order so every round applies ``n // 2`` disjoint plane rotations
at once, which keeps the inner loop in BLAS.  Matrices here are small
(at most a few dozen rows), where Jacobi is both fast enough and accurate to
a few ulps.
"""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DimensionError, NumericError, SingularityError

SPD_FLOOR = 1e-12
JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 100


@dataclass(frozen=True)
class SymEig:
    """Eigen-decomposition ``M = V diag(eigenvalues) V^T``, eigenvalues ascending."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def apply(self, fn):
        """Return ``V diag(fn(eigenvalues)) V^T``."""
        V = self.eigenvectors
        out = (V * fn(self.eigenvalues)) @ V.T
        return 0.5 * (out + out.T)

    def reconstruct(self):
        return self.apply(lambda lam: lam)


@dataclass(frozen=True)
class WhiteningTransform:
    """Affine map ``z = matrix @ (x - mean)``."""

    mean: np.ndarray
    matrix: np.ndarray

    def apply(self, X):
        X = np.asarray(X, dtype=np.float64)
        return self.matrix @ (X - self.mean[:, None])


def _square(M, name):
    M = np.array(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise NumericError(f"{name} contains non-finite entries")
    return M


@lru_cache(maxsize=None)
def _round_robin(n):
    """Disjoint (p, q) index pairs for each round of one Jacobi sweep."""
    m = n + (n % 2)
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        ps, qs = [], []
        for i in range(m // 2):
            a, b = players[i], players[m - 1 - i]
            if a < n and b < n:
                ps.append(min(a, b))
                qs.append(max(a, b))
        rounds.append((np.array(ps, dtype=np.intp), np.array(qs, dtype=np.intp)))
        players = [players[0], players[-1]] + players[1:-1]
    return tuple(rounds)


def _off_norm(A):
    off = A - np.diag(np.diag(A))
    return np.linalg.norm(off)


def sym_eig(M, name="matrix", tol=JACOBI_TOL, max_sweeps=JACOBI_MAX_SWEEPS):
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    The input is symmetrized as ``(M + M^T) / 2``.  Iteration stops once the
    off-diagonal Frobenius norm drops below ``tol`` times the Frobenius norm
    of ``M``.

    Raises
    ------
    DimensionError
        If ``M`` is not square.
    NumericError
        If ``max_sweeps`` sweeps do not reach the tolerance.
    """
    A = _square(M, name)
    A = 0.5 * (A + A.T)
    n = A.shape[0]
    V = np.eye(n)
    scale = np.linalg.norm(A)
    if n < 2 or scale == 0.0:
        w = np.diag(A).copy()
        order = np.argsort(w, kind="stable")
        return SymEig(w[order], V[:, order])

    rounds = _round_robin(n)
    threshold = tol * scale
    for _ in range(max_sweeps):
        if _off_norm(A) <= threshold:
            break
        for p, q in rounds:
            apq = A[p, q]
            active = apq != 0.0
            safe = np.where(active, apq, 1.0)
            theta = (A[q, q] - A[p, p]) / (2.0 * safe)
            t = np.where(theta >= 0.0, 1.0, -1.0) / (np.abs(theta) + np.hypot(theta, 1.0))
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = t * c
            c = np.where(active, c, 1.0)
            s = np.where(active, s, 0.0)
            R = np.eye(n)
            R[p, p] = c
            R[q, q] = c
            R[p, q] = s
            R[q, p] = -s
            A = R.T @ A @ R
            A = 0.5 * (A + A.T)
            V = V @ R
    else:
        if _off_norm(A) > threshold:
            raise NumericError(
                f"Jacobi iteration on {name} did not converge in {max_sweeps} sweeps"
            )

    w = np.diag(A).copy()
    order = np.argsort(w, kind="stable")
    return SymEig(w[order], V[:, order])


def _spd_eig(M, name):
    eig = sym_eig(M, name=name)
    bad = eig.eigenvalues[eig.eigenvalues <= SPD_FLOOR]
    if bad.size:
        raise SingularityError(
            f"{name} is not positive definite: eigenvalue {bad[0]:.3e} <= {SPD_FLOOR:g}",
            eigenvalues=bad,
            where=name,
        )
    return eig


def mat_log_spd(M, name="matrix"):
    """Matrix logarithm of a symmetric positive definite matrix."""
    return _spd_eig(M, name).apply(np.log)


def mat_inv_spd(M, name="matrix"):
    """Inverse of a symmetric positive definite matrix via its eigenvalues."""
    return _spd_eig(M, name).apply(np.reciprocal)


def covariance(X, center=False):
    """Second-moment matrix ``(1/T) X X^T`` of a ``d x T`` sample matrix.

    With ``center=True`` the row means are removed first.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise DimensionError(f"expected a d x T matrix, got shape {X.shape}")
    T = X.shape[1]
    if T < 2:
        raise DimensionError(f"covariance needs at least 2 samples, got {T}")
    if center:
        X = X - X.mean(axis=1, keepdims=True)
    C = X @ X.T / T
    return 0.5 * (C + C.T)


def pca_whiten(X, floor=1e-10):
    """PCA-whiten a ``d x T`` matrix.

    Returns
    -------
    Z : ndarray, shape (d, T)
        Whitened data with centered covariance equal to the identity.
    transform : WhiteningTransform
        The map that produced ``Z``; reusable on new samples.
    """
    X = np.asarray(X, dtype=np.float64)
    mean = X.mean(axis=1)
    C = covariance(X, center=True)
    eig = sym_eig(C, name="data covariance")
    small = eig.eigenvalues[eig.eigenvalues <= floor]
    if small.size:
        raise SingularityError(
            f"covariance is rank deficient; near-zero eigenvalues {small.tolist()}",
            eigenvalues=small,
            where="data covariance",
        )
    M = (eig.eigenvectors / np.sqrt(eig.eigenvalues)).T
    transform = WhiteningTransform(mean=mean, matrix=M)
    return transform.apply(X), transform
