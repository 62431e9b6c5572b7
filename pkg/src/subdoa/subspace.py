"""Signal/noise subspace split of whitened covariances and CW RTF estimates."""

from dataclasses import dataclass

import numpy as np

from .backend import kernels as K
from .errors import DegenerateReference, InvalidInput, NumericalFailure


@dataclass
class WhitenedDecomposition:
    """Eigendecomposition of one whitened covariance plus its noise factor."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    lower: np.ndarray

    @property
    def principal(self) -> np.ndarray:
        return self.eigenvectors[:, 0]

    @property
    def noise_basis(self) -> np.ndarray:
        return self.eigenvectors[:, 1:]


def decompose(phi_y_w: np.ndarray, lower: np.ndarray) -> WhitenedDecomposition:
    """Eigendecompose a whitened covariance, eigenvalues descending.

    The principal eigenvector spans the (rank-one) signal subspace, the
    remaining columns the noise subspace.
    """
    phi_y_w = np.asarray(phi_y_w, dtype=np.complex128)
    if phi_y_w.ndim != 2 or phi_y_w.shape[0] != phi_y_w.shape[1]:
        raise InvalidInput("phi_y_w must be a square matrix")
    w, v, ok = K.jacobi_evd(np.ascontiguousarray(phi_y_w)[None])
    if not ok[0]:
        raise NumericalFailure("eigendecomposition did not converge")
    return WhitenedDecomposition(w[0], v[0], np.asarray(lower, dtype=np.complex128))


@dataclass
class BinDecompositions:
    """Per-bin whitened eigendecompositions for one frame."""

    eigenvalues: np.ndarray   # (bins, n)
    eigenvectors: np.ndarray  # (bins, n, n)
    lower: np.ndarray         # (bins, n, n)

    @property
    def principal(self) -> np.ndarray:
        return self.eigenvectors[:, :, 0]

    @property
    def noise_basis(self) -> np.ndarray:
        return self.eigenvectors[:, :, 1:]

    @property
    def n_bins(self) -> int:
        return self.eigenvalues.shape[0]

    @property
    def n_channels(self) -> int:
        return self.eigenvalues.shape[1]


def decompose_bins(phi_y_w: np.ndarray, lower: np.ndarray) -> BinDecompositions:
    """Batched decompose() over the bin axis."""
    phi_y_w = np.ascontiguousarray(np.asarray(phi_y_w), dtype=np.complex128)
    if phi_y_w.ndim != 3 or phi_y_w.shape[1] != phi_y_w.shape[2]:
        raise InvalidInput("phi_y_w must be a stack of square matrices")
    w, v, ok = K.jacobi_evd(phi_y_w)
    if not np.all(ok):
        raise NumericalFailure(f"eigendecomposition failed on {int((~ok).sum())} bins")
    return BinDecompositions(w, v, np.ascontiguousarray(lower, dtype=np.complex128))


def estimate_rtf_cw_bins(dec: BinDecompositions, ref: int = 0):
    """Batched CW RTF estimate; returns (g, degenerate_reference_mask).

    Bins whose de-whitened principal vanishes on the reference channel give
    a zero row plus a mask flag instead of raising.
    """
    d = np.einsum("knm,km->kn", dec.lower, dec.principal)
    nrm = np.linalg.norm(d, axis=1)
    refv = d[:, ref]
    degen = np.abs(refv) <= 1e-12 * nrm
    safe = np.where(degen, 1.0, refv)
    g = np.where(degen[:, None], 0.0, d / safe[:, None])
    return g, degen


def estimate_rtf_cw(dec: WhitenedDecomposition, ref: int = 0) -> np.ndarray:
    """Covariance-whitening RTF estimate from one decomposition.

    De-whitens the principal eigenvector with the noise Cholesky factor and
    normalizes it to the reference channel, so the result has a 1 there.
    """
    d = dec.lower @ dec.principal
    scale = np.linalg.norm(d)
    if abs(d[ref]) <= 1e-12 * scale:
        raise DegenerateReference(f"reference channel {ref} entry is numerically zero")
    return d / d[ref]
