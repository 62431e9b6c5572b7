"""Narrowband spectra, broadband pooling, and the frame-level assembly."""

import numpy as np
import pytest

from subdoa.covariance import whiten
from subdoa.errors import InvalidInput
from subdoa.prototypes import DirectionGrid, generate_freefield_set, whiten_set
from subdoa.spectra import (
    METHODS,
    CONDITIONS,
    argmax_direction,
    frame_spectra,
    music_sps,
    music_sps_literal,
    normalize_sps,
    pool_broadband,
    rtf_match_sps,
)
from subdoa.subspace import decompose_bins

FS = 16000

HA_POS = np.array([
    [0.08, 0.01, 0.0],
    [0.08, -0.01, 0.0],
    [-0.08, 0.01, 0.0],
    [-0.08, -0.01, 0.0],
])
EMIC_POS = np.array([[0.3, 0.2, 0.0]])
FULL_POS = np.vstack([HA_POS, EMIC_POS])


def random_bins(rng, n_bins, n=5, phi_s=4.0):
    a = rng.standard_normal((n_bins, n)) + 1j * rng.standard_normal((n_bins, n))
    b = rng.standard_normal((n_bins, n, n)) + 1j * rng.standard_normal((n_bins, n, n))
    phi_u = b @ np.conj(np.transpose(b, (0, 2, 1))) + n * np.eye(n)
    phi_y = phi_s * np.einsum("kn,km->knm", a, np.conj(a)) + phi_u
    return a, phi_u, phi_y


def test_subspace_spectrum_matches_literal_form():
    rng = np.random.default_rng(41)
    _, phi_u, phi_y = random_bins(rng, 12)
    phi_w, low, _ = whiten(phi_y, phi_u)
    dec = decompose_bins(phi_w, low)
    cand = rng.standard_normal((12, 20, 5)) + 1j * rng.standard_normal((12, 20, 5))
    fast = music_sps(dec, cand)
    slow = music_sps_literal(dec.noise_basis, cand)
    np.testing.assert_allclose(fast, slow, rtol=1e-10)


def test_normalize_sps():
    p = np.array([[1.0, 4.0, 2.0], [3.0, 3.0, 6.0]])
    q = normalize_sps(p)
    assert np.allclose(q.max(axis=1), 1.0)
    assert np.allclose(q[0], [0.25, 1.0, 0.5])
    with pytest.raises(InvalidInput):
        normalize_sps(np.array([[1.0, 2.0], [0.0, 0.0]]))


def test_pool_broadband():
    p = np.array([[1.0, 2.0], [8.0, 4.0]])
    pooled = pool_broadband(p, "music")
    # per-bin peaks go to 1: rows become [0.5, 1] and [1, 0.5]
    assert np.allclose(pooled, [0.75, 0.75])
    pooled_rtf = pool_broadband(-p, "rtf")
    assert np.allclose(pooled_rtf, [-4.5, -3.0])
    masked = pool_broadband(-p, "rtf", bin_mask=np.array([False, True]))
    assert np.allclose(masked, [-8.0, -4.0])
    with pytest.raises(InvalidInput):
        pool_broadband(p, "rtf", bin_mask=np.array([False, False]))
    with pytest.raises(InvalidInput):
        pool_broadband(p, "nope")


def test_rtf_match_range_and_peak():
    rng = np.random.default_rng(42)
    g = rng.standard_normal((6, 4)) + 1j * rng.standard_normal((6, 4))
    cand = rng.standard_normal((6, 9, 4)) + 1j * rng.standard_normal((6, 9, 4))
    # candidate 3 is the estimate itself, complex-scaled
    cand[:, 3, :] = g * (0.7 - 1.3j)
    p = rtf_match_sps(g, cand)
    assert np.all(p <= 1e-12)
    assert np.all(p >= -np.pi / 2 - 1e-12)
    assert np.allclose(p[:, 3], 0.0, atol=1e-7)
    # orthogonal candidate scores the floor
    g0 = np.zeros((1, 2), dtype=complex)
    g0[0, 0] = 1.0
    c0 = np.zeros((1, 1, 2), dtype=complex)
    c0[0, 0, 1] = 1.0
    assert np.isclose(rtf_match_sps(g0, c0)[0, 0], -np.pi / 2)


def test_argmax_direction_tie_goes_to_smaller_angle():
    angles = np.array([-90.0, 0.0, 90.0])
    ang, idx = argmax_direction(np.array([0.2, 0.7, 0.7]), angles)
    assert (ang, idx) == (0.0, 1)
    with pytest.raises(InvalidInput):
        argmax_direction(np.array([1.0, 2.0]), angles)


def build_oracle_frame(rng, theta_deg, grid, n_bins=33, phi_s=6.0):
    """Rank-one plane-wave frame with an uncorrelated-noise floor per bin."""
    full = generate_freefield_set(FULL_POS, grid, n_bins, FS, scope="full")
    i_true = int(np.where(grid.angles_deg == theta_deg)[0][0])
    a = full.values[:, i_true, :]
    b = rng.standard_normal((n_bins, 5, 5)) + 1j * rng.standard_normal((n_bins, 5, 5))
    phi_u = 0.05 * (b @ np.conj(np.transpose(b, (0, 2, 1)))) + np.eye(5)
    phi_y = phi_s * np.einsum("kn,km->knm", a, np.conj(a)) + phi_u
    return full, i_true, phi_u, phi_y


def test_frame_spectra_all_methods_peak_at_truth():
    rng = np.random.default_rng(43)
    grid = DirectionGrid.uniform(15.0)
    full, i_true, phi_u, phi_y = build_oracle_frame(rng, 30.0, grid)
    proto = full.values[:, :, :4]

    phi_w, low, _ = whiten(phi_y, phi_u)
    dec_full = decompose_bins(phi_w, low)
    phi_w_ha, low_ha, _ = whiten(phi_y[:, :4, :4], phi_u[:, :4, :4])
    dec_ha = decompose_bins(phi_w_ha, low_ha)

    out = frame_spectra(proto, dec_ha=dec_ha, dec_full=dec_full)
    assert set(out.spectra) == {(m, c) for m in METHODS for c in CONDITIONS}
    for (meth, cond), p in out.spectra.items():
        assert p.shape == (33, grid.size)
        pooled = pool_broadband(p, meth)
        _, idx = argmax_direction(pooled, grid.angles_deg)
        assert idx == i_true, (meth, cond)
    # completion reused across the two he_he spectra
    assert out.completed is not None
    assert not out.completed.ill_conditioned.any()


def test_frame_spectra_subset_and_validation():
    rng = np.random.default_rng(44)
    grid = DirectionGrid.uniform(45.0)
    full, _, phi_u, phi_y = build_oracle_frame(rng, 45.0, grid, n_bins=9)
    proto = full.values[:, :, :4]
    phi_w, low, _ = whiten(phi_y, phi_u)
    dec_full = decompose_bins(phi_w, low)

    out = frame_spectra(proto, dec_full=dec_full, methods=("music",),
                        conditions=("he_h", "he_he"))
    assert set(out.spectra) == {("music", "he_h"), ("music", "he_he")}

    with pytest.raises(InvalidInput):
        frame_spectra(proto, dec_full=dec_full)  # h_h needs dec_ha
    with pytest.raises(InvalidInput):
        frame_spectra(proto, dec_ha=dec_full, methods=("music",),
                      conditions=("h_h",))  # channel count mismatch feeds through
    with pytest.raises(InvalidInput):
        frame_spectra(proto[0], dec_full=dec_full)


def test_he_h_zero_padding_matches_truncated_projection():
    # padding the unknown entry with zero must equal scoring the sub-vector
    # against the top rows of the noise basis
    rng = np.random.default_rng(45)
    _, phi_u, phi_y = random_bins(rng, 7)
    phi_w, low, _ = whiten(phi_y, phi_u)
    dec = decompose_bins(phi_w, low)
    proto = rng.standard_normal((7, 11, 4)) + 1j * rng.standard_normal((7, 11, 4))
    sub_w = whiten_set(proto, np.ascontiguousarray(low[:, :4, :4]))
    padded = np.concatenate([sub_w, np.zeros((7, 11, 1), dtype=complex)], axis=2)
    got = music_sps(dec, padded)
    proj = np.einsum("knj,kin->kij", np.conj(dec.noise_basis[:, :4, :]), sub_w)
    want = 1.0 / np.maximum(np.sum(np.abs(proj) ** 2, axis=2), 1e-30)
    np.testing.assert_allclose(got, want, rtol=1e-10)
