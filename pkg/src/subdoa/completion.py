"""Least-squares completion of prototype sets for a partially known channel.

The calibrated sub-array contributes known prototype vectors; the extra
microphone's transfer-function entry is unknown.  With a rank-one target the
noise subspace pins the missing entry: splitting the noise basis Q into the
calibrated rows Q_c and the extra row q_e, exact orthogonality of the full
vector [a; alpha] reads  a = -alpha * r  with  r = Q_c^{-H} conj(q_e).  The
entry is recovered in least squares through the inverse slope,

    beta = a^H r / ||a||^2,    alpha = -1 / beta = -||a||^2 / (a^H r),

computed per (bin, direction) with r reused across the whole direction grid
of a bin.  r is invariant under unitary re-parameterizations of the basis,
so any orthonormal noise basis gives the same completion.
"""

from dataclasses import dataclass

import numpy as np

from .backend import kernels as K
from .errors import DegenerateAlpha, IllConditioned, InvalidInput

ALPHA_TOL = 1e-12


@dataclass
class CompletedSet:
    """Whitened prototype vectors with the extra channel filled in."""

    values: np.ndarray        # (bins, directions, n_known + 1)
    elements: np.ndarray      # (bins, directions) the completed entries
    degenerate: np.ndarray    # (bins, directions) bool, entry forced to zero
    ill_conditioned: np.ndarray  # (bins,) bool, whole bin fell back to zero
    condition: np.ndarray     # (bins,) condition estimate of the known block

    @property
    def n_bins(self) -> int:
        return self.values.shape[0]


def partition_noise_subspace(noise_basis, n_known):
    """Split a noise basis into the known-channel block and the extra row.

    noise_basis: (..., n, n - 1) orthonormal columns for a rank-one target.
    Only the square split (n_known = n - 1, one extra channel) is supported;
    the completion relies on the known block being invertible.
    """
    nb = np.asarray(noise_basis)
    if nb.ndim < 2:
        raise InvalidInput("noise basis must be at least 2-d")
    n, cols = nb.shape[-2], nb.shape[-1]
    if n_known != n - 1:
        raise InvalidInput(f"expected one extra channel, got n={n}, n_known={n_known}")
    if cols != n - 1:
        raise InvalidInput(f"noise basis must have n-1 columns for a rank-one target, got {cols}")
    return nb[..., :n_known, :], nb[..., n_known, :]


def complete_atf_element(noise_basis, a_known_w):
    """Completed entry for one bin and one direction; raises on failure."""
    nb = np.asarray(noise_basis, dtype=np.complex128)
    a = np.asarray(a_known_w, dtype=np.complex128)
    m = nb.shape[0] - 1
    if a.shape != (m,):
        raise InvalidInput(f"prototype sub-vector must have shape ({m},), got {a.shape}")
    q_known, q_e = partition_noise_subspace(nb, m)
    r, cond, ok = K.completion_r(q_known[None], q_e[None])
    if not ok[0]:
        raise IllConditioned(f"known block condition {cond[0]:.3e}")
    denom = np.vdot(a, r[0])
    norm2 = np.vdot(a, a).real
    if norm2 <= 0.0 or abs(denom) < ALPHA_TOL * norm2:
        raise DegenerateAlpha("prototype sub-vector is orthogonal to the completion direction")
    return complex(-norm2 / denom)


def complete_prototype_atf_set(noise_basis, a_set_w) -> CompletedSet:
    """Complete a whitened prototype set over all bins and directions.

    noise_basis: (bins, n, n - 1); a_set_w: (bins, directions, n - 1).
    Failures never raise here: ill-conditioned bins and degenerate
    directions fall back to a zero entry and are reported in the masks.
    """
    nb = np.ascontiguousarray(np.asarray(noise_basis), dtype=np.complex128)
    a_set = np.ascontiguousarray(np.asarray(a_set_w), dtype=np.complex128)
    if nb.ndim != 3 or a_set.ndim != 3:
        raise InvalidInput("noise_basis and a_set_w must be 3-d")
    m = nb.shape[1] - 1
    if a_set.shape[0] != nb.shape[0] or a_set.shape[2] != m:
        raise InvalidInput("prototype set does not match the noise basis layout")
    q_known, q_e = partition_noise_subspace(nb, m)
    r, cond, ok = K.completion_r(np.ascontiguousarray(q_known),
                                 np.ascontiguousarray(q_e))
    elem, degen = K.complete_elements(a_set, r)
    # a failed bin leaves r zero, so its entries are already flagged degenerate
    values = np.concatenate([a_set, elem[:, :, None]], axis=2)
    return CompletedSet(values=values, elements=elem, degenerate=degen,
                        ill_conditioned=~ok, condition=cond)


def complete_prototype_rtf_set(noise_basis, a_set_w, lower, ref=0):
    """Completed candidates in relative form for the matching spectrum.

    De-whitens the completed vectors through the noise factor and normalizes
    each to the reference channel.  Returns (g, completed, ref_degenerate);
    directions whose reference entry vanishes give a zero vector and a flag.
    """
    completed = complete_prototype_atf_set(noise_basis, a_set_w)
    low = np.ascontiguousarray(np.asarray(lower), dtype=np.complex128)
    if low.ndim != 3 or low.shape[1] != completed.values.shape[2]:
        raise InvalidInput("lower factor does not match the completed set")
    g, ref_degen = K.rtf_from_whitened(low, completed.values, ref)
    return g, completed, ref_degen
