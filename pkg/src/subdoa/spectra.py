"""Narrowband pseudo-spectra and their assembly for the array conditions.

Two spectra per frame and bin over the candidate grid:

  subspace:  p = 1 / ||Q_n^H c||^2  on whitened candidates,
  matching:  p = -acos(|g^H c| / (||g|| ||c||))  on relative candidates,

each evaluated under three array conditions: the calibrated sub-array alone
("h_h"), the full array steered with sub-array prototypes ("he_h", unknown
entry zero-padded), and the full array with completed prototypes ("he_he").
"""

from dataclasses import dataclass, field

import numpy as np

from .backend import kernels as K
from .completion import CompletedSet, complete_prototype_atf_set
from .errors import InvalidInput
from .prototypes import whiten_set
from .subspace import BinDecompositions, estimate_rtf_cw_bins

METHODS = ("music", "rtf")
CONDITIONS = ("h_h", "he_h", "he_he")


def music_sps(dec: BinDecompositions, cand_w) -> np.ndarray:
    """Subspace spectrum via the principal-projection complement."""
    cand_w = np.ascontiguousarray(np.asarray(cand_w), dtype=np.complex128)
    return K.music(np.ascontiguousarray(dec.principal), cand_w)


def music_sps_literal(noise_basis, cand_w) -> np.ndarray:
    """Reference form 1 / sum_j |q_j^H c|^2; same result, more flops."""
    proj = np.einsum("knj,kin->kij", np.conj(noise_basis), cand_w)
    resid = np.maximum(np.sum(np.abs(proj) ** 2, axis=2), 1e-30)
    return 1.0 / resid


def rtf_match_sps(ghat, cand_rtf) -> np.ndarray:
    """Matching spectrum, negated Hermitian angle in [-pi/2, 0]."""
    ghat = np.ascontiguousarray(np.asarray(ghat), dtype=np.complex128)
    cand_rtf = np.ascontiguousarray(np.asarray(cand_rtf), dtype=np.complex128)
    return K.rtf_match(ghat, cand_rtf)


def normalize_sps(p) -> np.ndarray:
    """Scale each bin so its largest candidate value is 1."""
    p = np.asarray(p, dtype=np.float64)
    peak = p.max(axis=-1, keepdims=True)
    if np.any(peak <= 0.0):
        raise InvalidInput("every bin needs a positive spectrum peak")
    return p / peak


def pool_broadband(p, method: str, bin_mask=None) -> np.ndarray:
    """Average a (bins, directions) spectrum over bins.

    Subspace spectra are peak-normalized per bin first so loud bins do not
    dominate.  bin_mask selects the bins that enter the average.
    """
    p = np.asarray(p, dtype=np.float64)
    if method == "music":
        p = normalize_sps(p)
    elif method != "rtf":
        raise InvalidInput(f"unknown method {method!r}")
    if bin_mask is None:
        return p.mean(axis=0)
    bin_mask = np.asarray(bin_mask, dtype=bool)
    if bin_mask.shape != (p.shape[0],):
        raise InvalidInput("bin_mask must have one entry per bin")
    if not bin_mask.any():
        raise InvalidInput("bin_mask excludes every bin")
    return p[bin_mask].mean(axis=0)


def argmax_direction(pooled, angles_deg):
    """(angle, index) of the pooled maximum; ties go to the smaller angle."""
    pooled = np.asarray(pooled)
    if pooled.shape != np.shape(angles_deg):
        raise InvalidInput("pooled spectrum and grid sizes differ")
    idx = int(np.argmax(pooled))
    return float(np.asarray(angles_deg)[idx]), idx


@dataclass
class FrameSpectra:
    """Raw (bins, directions) spectra keyed by (method, condition)."""

    spectra: dict
    rtf_reference_degenerate: dict = field(default_factory=dict)
    candidate_degenerate: dict = field(default_factory=dict)
    completed: CompletedSet | None = None


def frame_spectra(proto_atf_ha, dec_ha: BinDecompositions | None = None,
                  dec_full: BinDecompositions | None = None, ref: int = 0,
                  methods=METHODS, conditions=CONDITIONS) -> FrameSpectra:
    """Assemble the requested per-frame spectra.

    proto_atf_ha: (bins, directions, M) unwhitened sub-array prototypes.
    Shared intermediates (whitened sets, the completion, the full-array RTF
    estimate) are computed once and reused across the spectra that need them.
    """
    proto = np.ascontiguousarray(np.asarray(proto_atf_ha), dtype=np.complex128)
    if proto.ndim != 3:
        raise InvalidInput("prototypes must be bins x directions x channels")
    m = proto.shape[2]
    need = {(meth, cond) for meth in methods for cond in conditions}
    if any(cond == "h_h" for _, cond in need) and dec_ha is None:
        raise InvalidInput("condition h_h needs the sub-array decomposition")
    if any(cond != "h_h" for _, cond in need) and dec_full is None:
        raise InvalidInput("conditions he_h/he_he need the full decomposition")
    if dec_full is not None and dec_full.n_channels != m + 1:
        raise InvalidInput("full decomposition must have one channel beyond the prototypes")

    out = FrameSpectra(spectra={})
    proto_rtf = None
    sub_w = None       # prototypes whitened by the leading block of the full factor
    ghat_full = None

    def get_proto_rtf():
        nonlocal proto_rtf
        if proto_rtf is None:
            refcol = proto[:, :, ref]
            if np.any(np.abs(refcol) == 0.0):
                raise InvalidInput("prototype reference entries must be nonzero")
            proto_rtf = proto / refcol[:, :, None]
        return proto_rtf

    def get_sub_w():
        nonlocal sub_w
        if sub_w is None:
            # lower-triangular factor: its leading block whitens the
            # sub-vector exactly as the full factor would
            sub_w = whiten_set(proto, dec_full.lower[:, :m, :m])
        return sub_w

    def get_ghat_full():
        nonlocal ghat_full
        if ghat_full is None:
            ghat_full = estimate_rtf_cw_bins(dec_full, ref)
        return ghat_full

    for meth, cond in sorted(need):
        if meth == "music":
            if cond == "h_h":
                cand = whiten_set(proto, dec_ha.lower)
                out.spectra[(meth, cond)] = music_sps(dec_ha, cand)
            elif cond == "he_h":
                sw = get_sub_w()
                cand = np.concatenate(
                    [sw, np.zeros(sw.shape[:2] + (1,), dtype=np.complex128)], axis=2
                )
                out.spectra[(meth, cond)] = music_sps(dec_full, cand)
            else:
                if out.completed is None:
                    out.completed = complete_prototype_atf_set(
                        np.ascontiguousarray(dec_full.noise_basis), get_sub_w()
                    )
                out.spectra[(meth, cond)] = music_sps(dec_full, out.completed.values)
        else:
            if cond == "h_h":
                g, degen = estimate_rtf_cw_bins(dec_ha, ref)
                out.rtf_reference_degenerate[cond] = degen
                out.spectra[(meth, cond)] = rtf_match_sps(g, get_proto_rtf())
            elif cond == "he_h":
                g, degen = get_ghat_full()
                out.rtf_reference_degenerate[cond] = degen
                out.spectra[(meth, cond)] = rtf_match_sps(g[:, :m], get_proto_rtf())
            else:
                if out.completed is None:
                    out.completed = complete_prototype_atf_set(
                        np.ascontiguousarray(dec_full.noise_basis), get_sub_w()
                    )
                g, degen = get_ghat_full()
                out.rtf_reference_degenerate[cond] = degen
                cand, cand_degen = K.rtf_from_whitened(
                    np.ascontiguousarray(dec_full.lower), out.completed.values, ref
                )
                out.candidate_degenerate[cond] = cand_degen
                out.spectra[(meth, cond)] = rtf_match_sps(g, cand)
    return out
