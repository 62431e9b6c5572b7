"""Gating, time-difference estimation, association, and fusion."""

import logging

import numpy as np
import pytest

from subdoa.errors import InvalidInput
from subdoa.fusion import (
    BinAssociation,
    CoherenceTracker,
    associate_bins,
    cdr_estimate,
    cdr_from_coherence,
    diffuse_coherence,
    estimate_itds,
    fuse_and_argmax,
    interaural_phase,
    oracle_cdr_db,
    select_frequency_subset,
    to_db,
)

FS = 16000


def test_diffuse_coherence_matches_sinc():
    freqs = np.array([0.0, 500.0, 1000.0, 4000.0])
    d, c = 0.17, 343.0
    got = diffuse_coherence(freqs, d, c)
    x = 2.0 * np.pi * freqs * d / c
    want = np.ones_like(x)
    want[1:] = np.sin(x[1:]) / x[1:]
    np.testing.assert_allclose(got, want, atol=1e-12)
    assert got[0] == 1.0
    assert abs(diffuse_coherence(c / (2 * d), d, c)) < 1e-12


def test_cdr_pure_diffuse_and_pure_coherent():
    for gd in (0.9, 0.5, 0.1, -0.15):
        assert cdr_from_coherence(gd + 0.0j, gd) == 0.0
    # fully coherent input hits the magnitude clamp and a huge finite ratio
    val = cdr_from_coherence(np.array([1.0 + 0.0j]), np.array([0.5]))[0]
    assert np.isfinite(val)
    assert val > 1e4


def test_cdr_recovers_model_ratio():
    rng = np.random.default_rng(51)
    for _ in range(300):
        kappa = 10 ** rng.uniform(-2, 2)
        theta = rng.uniform(-np.pi, np.pi)
        gd = rng.uniform(-0.21, 0.99)
        gamma = (kappa * np.exp(1j * theta) + gd) / (kappa + 1.0)
        if np.abs(gamma) >= 1 - 1e-6:
            continue
        est = cdr_from_coherence(gamma, gd)
        assert abs(est - kappa) <= 1e-8 * kappa


def test_tracker_unrolled_and_clamped_coherence():
    tr = CoherenceTracker.create(3, alpha=0.5)
    xa = np.array([1.0 + 0j, 2.0j, 1.0 - 1.0j])
    tr.update(xa, xa)
    tr.update(xa, xa)
    # two identical updates: s = (0.5*0.5 + 0.5) |x|^2
    np.testing.assert_allclose(tr.s_aa, 0.75 * np.abs(xa) ** 2, rtol=1e-12)
    np.testing.assert_allclose(tr.s_ab, 0.75 * np.abs(xa) ** 2, rtol=1e-12)
    gamma = tr.coherence()
    np.testing.assert_allclose(np.abs(gamma), 1.0 - 1e-6, rtol=1e-9)

    with pytest.raises(InvalidInput):
        CoherenceTracker.create(3, alpha=1.0)


def test_cdr_estimate_dead_bins():
    tr = CoherenceTracker.create(4, alpha=0.9)
    out = cdr_estimate(tr, diffuse_coherence(np.zeros(4), 0.17))
    assert np.all(out == -np.inf)


def test_oracle_cdr_db():
    assert oracle_cdr_db(np.array([2.0]), np.array([2.0]))[0] == 0.0
    assert oracle_cdr_db(np.array([0.0]), np.array([1.0]))[0] == -np.inf
    assert np.isclose(oracle_cdr_db(np.array([10.0]), np.array([1.0]))[0], 10.0)


def test_select_frequency_subset():
    cdr = np.array([-np.inf, -5.0, -3.0, 0.0, 12.0])
    np.testing.assert_array_equal(
        select_frequency_subset(cdr, -3.0), [False, False, True, True, True]
    )
    np.testing.assert_array_equal(
        select_frequency_subset(cdr, -5.0), [False, True, True, True, True]
    )
    assert not select_frequency_subset(cdr, 100.0).any()


def delayed_cross_track(rng, delays, weights, n_frames=40, frame_len=512, alpha=0.9):
    tr = CoherenceTracker.create(frame_len // 2 + 1, alpha)
    for _ in range(n_frames):
        xa = np.zeros(frame_len // 2 + 1, dtype=complex)
        xb = np.zeros_like(xa)
        for d, w in zip(delays, weights):
            s = np.fft.rfft(rng.standard_normal(frame_len))
            shift = np.exp(-2j * np.pi * np.fft.rfftfreq(frame_len) * d)
            xa += np.sqrt(w) * s
            xb += np.sqrt(w) * s * shift
        tr.update(xa, xb)
    return tr


def test_itds_single_delay():
    rng = np.random.default_rng(52)
    tr = delayed_cross_track(rng, [5], [1.0])
    taus = estimate_itds(tr.s_ab, FS, 512, 1, max_itd=10 / FS)
    assert abs(taus[0] - 5 / FS) <= 1 / FS


def test_itds_two_sources_sorted():
    rng = np.random.default_rng(53)
    tr = delayed_cross_track(rng, [4, -6], [2.0, 1.0])
    taus = estimate_itds(tr.s_ab, FS, 512, 2, max_itd=10 / FS)
    assert len(taus) == 2
    assert taus[0] < taus[1]
    assert abs(taus[0] - (-6 / FS)) <= 1 / FS
    assert abs(taus[1] - 4 / FS) <= 1 / FS


def test_itds_duplicates_when_window_too_small(caplog):
    rng = np.random.default_rng(54)
    tr = delayed_cross_track(rng, [0], [1.0])
    with caplog.at_level(logging.WARNING):
        taus = estimate_itds(tr.s_ab, FS, 512, 3, max_itd=1 / FS)
    assert len(taus) == 3
    assert np.all(taus == taus[0])
    assert any("duplicating" in r.message for r in caplog.records)


def test_associate_exact_phases():
    freqs = np.fft.rfftfreq(512, 1 / FS)
    tau = np.array([-3 / FS, 4 / FS])
    # bins drawn from speaker 1's phase model exactly
    phase = np.angle(np.exp(1j * 2 * np.pi * freqs * tau[1]))
    ind = associate_bins(phase, tau, freqs)
    assert ind.shape == (len(freqs), 2)
    np.testing.assert_array_equal(ind.sum(axis=1), 1)
    # f = 0 ties toward the smaller index; everything else goes to speaker 1
    assert ind[0, 0]
    assert ind[1:, 1].mean() > 0.9

    single = associate_bins(phase, tau[:1], freqs)
    assert single[:, 0].all()


def test_associate_mixture_accuracy():
    freqs = np.fft.rfftfreq(512, 1 / FS)
    tau = np.array([-6 / FS, 5 / FS])
    owner = np.arange(len(freqs)) % 2
    phase = 2 * np.pi * freqs * tau[owner]
    phase = np.angle(np.exp(1j * phase))
    ind = associate_bins(phase, tau, freqs)
    correct = ind[np.arange(len(freqs)), owner]
    assert correct.mean() >= 0.9


def test_interaural_phase_sign():
    freqs = np.fft.rfftfreq(512, 1 / FS)
    delay = 7 / FS
    xa = np.exp(1j * 0.3 * np.ones(len(freqs)))
    xb = xa * np.exp(-2j * np.pi * freqs * delay)  # b lags a
    phi = interaural_phase(xa, xb)
    k = 20
    assert np.isclose(phi[k], np.angle(np.exp(2j * np.pi * freqs[k] * delay)))


def make_assoc(subset, indicator, itds=None):
    return BinAssociation(
        indicator=np.asarray(indicator, dtype=bool),
        subset_mask=np.asarray(subset, dtype=bool),
        itds=np.zeros(np.asarray(indicator).shape[1]) if itds is None else itds,
    )


def test_fuse_single_bin_and_ties():
    angles = np.array([-10.0, 0.0, 10.0])
    p = np.array([[0.1, 0.9, 0.3], [0.8, 0.1, 0.1]])
    assoc = make_assoc([True, False], [[True], [True]])
    est = fuse_and_argmax(p, assoc, angles)
    assert est.angles[0] == 0.0

    flat = np.ones((2, 3))
    est = fuse_and_argmax(flat, make_assoc([True, True], [[True], [True]]), angles)
    assert est.angles[0] == -10.0  # tie resolves to the smallest angle


def test_fuse_no_estimate_and_partition():
    angles = np.array([0.0, 90.0])
    p = np.ones((3, 2))
    assoc = make_assoc(
        [False, True, True],
        [[True, False], [True, False], [True, False]],
    )
    est = fuse_and_argmax(p, assoc, angles, frame_index=7)
    assert est.frame_index == 7
    assert not est.missing[0]
    assert est.missing[1]  # speaker 1 owns no gated bins


def test_fuse_monotone_and_scale_invariant():
    rng = np.random.default_rng(55)
    angles = np.arange(-180.0, 180.0, 30.0)
    p = rng.uniform(0.1, 1.0, size=(12, len(angles)))
    assoc = make_assoc(np.ones(12, bool), np.ones((12, 1), bool))
    base = fuse_and_argmax(p, assoc, angles).angles[0]
    # uniform positive rescale never moves the argmax
    assert fuse_and_argmax(3.7 * p, assoc, angles).angles[0] == base
    # appending a bin peaked at the current winner never moves it either
    extra = np.zeros((1, len(angles)))
    extra[0, int(np.where(angles == base)[0][0])] = 1.0
    p2 = np.vstack([p, extra])
    assoc2 = make_assoc(np.ones(13, bool), np.ones((13, 1), bool))
    assert fuse_and_argmax(p2, assoc2, angles).angles[0] == base


def test_to_db():
    np.testing.assert_allclose(to_db([1.0, 10.0, 0.0]), [0.0, 10.0, -np.inf])
