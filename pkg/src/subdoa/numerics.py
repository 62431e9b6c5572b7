"""Dense linear algebra for covariance-sized Hermitian problems.

All matrices here are small (dim <= 8, one per frequency bin), so the
eigen-solver is a cyclic Jacobi iteration and factorizations are written
out directly; batch variants of everything live in the kernel backends.
"""

from dataclasses import dataclass

import numpy as np

from .backend import kernels as K
from .errors import IllConditioned, InvalidInput, NumericalFailure

HERMITIAN_TOL = 1e-8
COND_LIMIT = 1e10


@dataclass
class EigenPair:
    """Eigenvalues (descending) and matching unit eigenvector columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


@dataclass
class CholeskyFactor:
    """Lower-triangular factor and the diagonal load that produced it."""

    lower: np.ndarray
    loading_applied: float


def _as_square_complex(a, name):
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidInput(f"{name} must be a square matrix, got shape {a.shape}")
    return np.ascontiguousarray(a, dtype=np.complex128)


def _check_hermitian(a, name):
    dev = np.linalg.norm(a - a.conj().T)
    scale = max(np.linalg.norm(a), 1.0)
    if dev > HERMITIAN_TOL * scale:
        raise InvalidInput(f"{name} is not Hermitian (deviation {dev:.3e})")
    return 0.5 * (a + a.conj().T)


def hermitian_evd(a) -> EigenPair:
    """Eigendecomposition of a Hermitian matrix by cyclic Jacobi rotations.

    Eigenvalues come back descending with ties kept in index order; each
    eigenvector column has its first non-negligible entry rotated to be
    real and non-negative, so the decomposition is deterministic.
    """
    a = _check_hermitian(_as_square_complex(a, "a"), "a")
    w, v, ok = K.jacobi_evd(a[None])
    if not ok[0]:
        raise NumericalFailure("Jacobi sweep cap reached without convergence")
    return EigenPair(w[0], v[0])


def cholesky(a) -> CholeskyFactor:
    """Lower Cholesky factor with escalating diagonal loading.

    Tries the plain factorization first, then reattempts with loading
    1e-10, 1e-8, 1e-6 times trace/dim until one succeeds.
    """
    a = _check_hermitian(_as_square_complex(a, "a"), "a")
    low, loading, ok = K.cholesky(a[None])
    if not ok[0]:
        raise NumericalFailure("matrix is not positive definite at any loading level")
    return CholeskyFactor(low[0], float(loading[0]))


def solve_inverse_hermitian_transpose(b, v) -> np.ndarray:
    """Solve B^H x = v through a pivoted factorization (B is never inverted)."""
    b = _as_square_complex(b, "b")
    v = np.ascontiguousarray(np.asarray(v), dtype=np.complex128)
    if v.shape != (b.shape[0],):
        raise InvalidInput(f"v must have shape ({b.shape[0]},), got {v.shape}")
    # kernel solves B^H r = conj(rhs), so feed conj(v)
    r, cond, ok = K.completion_r(b[None], np.conj(v)[None])
    if not ok[0]:
        raise IllConditioned(f"condition estimate {cond[0]:.3e} exceeds {COND_LIMIT:.0e}")
    return r[0]


def condition_estimate(b) -> float:
    """2-norm condition estimate of a square matrix via its Gram spectrum."""
    b = _as_square_complex(b, "b")
    gram = b.conj().T @ b
    w, _, ok = K.jacobi_evd(gram[None])
    if not ok[0]:
        raise NumericalFailure("Jacobi sweep cap reached without convergence")
    lo = w[0][-1]
    hi = max(w[0][0], 0.0)
    if lo <= 0.0:
        return np.inf
    return float(np.sqrt(hi / lo))
