"""Framing, reconstruction, and spectrum contracts for the STFT layer."""

import numpy as np
import pytest

from subdoa.errors import InvalidInput
from subdoa.stft import StftTensor, analyze, frame_count, sqrt_hann, synthesize

FS = 16000


def test_frame_geometry_at_16k():
    t = analyze(np.zeros(FS), FS)
    assert t.frame_len == 512
    assert t.hop == 256
    assert t.n_bins == 257
    assert t.n_frames == int(np.ceil(FS / 256))
    assert np.isclose(t.frequencies[1], FS / 512)
    assert np.isclose(t.frequencies[-1], FS / 2)


def test_window_pair_is_cola():
    win = sqrt_hann(512) ** 2
    total = win[:256] + win[256:]
    assert np.allclose(total, 1.0, atol=1e-12)


def test_trailing_partial_frame_zero_padded():
    x = np.ones(512 + 10)
    t = analyze(x, FS)
    assert t.n_frames == frame_count(522, 256) == 3
    # last frame covers samples 512..1023, only 10 of them are nonzero
    win = sqrt_hann(512)
    expect_dc = np.sum(win[:10])
    assert np.isclose(t.values[0, 0, 2].real, expect_dc, atol=1e-9)


def test_round_trip_interior_exact():
    rng = np.random.default_rng(7)
    x = rng.standard_normal((3, 4000))
    t = analyze(x, FS)
    y = synthesize(t)
    lo, hi = t.hop, (t.n_frames - 1) * t.hop
    assert np.max(np.abs(y[:, lo:hi] - x[:, lo:hi])) <= 1e-10


def test_impulse_spectrum_matches_direct_dft():
    pos = 300
    x = np.zeros(1024)
    x[pos] = 1.0
    t = analyze(x, FS)
    win = sqrt_hann(512)
    # frame 0 holds the impulse at offset 300: X(k) = w[300] e^{-2i pi k 300/512}
    k = np.arange(257)
    oracle = win[pos] * np.exp(-2j * np.pi * k * pos / 512)
    assert np.max(np.abs(t.values[0, :, 0] - oracle)) <= 1e-10
    # frame 1 holds it at offset 44
    off = pos - 256
    oracle1 = win[off] * np.exp(-2j * np.pi * k * off / 512)
    assert np.max(np.abs(t.values[0, :, 1] - oracle1)) <= 1e-10


def test_per_frame_parseval():
    rng = np.random.default_rng(8)
    x = rng.standard_normal(2048)
    t = analyze(x, FS)
    win = sqrt_hann(512)
    for l in range(t.n_frames):
        start = l * 256
        seg = np.zeros(512)
        avail = min(512, 2048 - start)
        if avail > 0:
            seg[:avail] = x[start : start + avail]
        seg *= win
        time_energy = np.sum(seg**2)
        spec = t.values[0, :, l]
        freq_energy = (np.abs(spec[0]) ** 2 + 2 * np.sum(np.abs(spec[1:-1]) ** 2) + np.abs(spec[-1]) ** 2) / 512
        assert np.isclose(time_energy, freq_energy, rtol=1e-10, atol=1e-12)


def test_mono_input_promoted():
    t = analyze(np.zeros(1000), FS)
    assert t.values.shape[0] == 1
    assert isinstance(t, StftTensor)


def test_invalid_inputs_rejected():
    with pytest.raises(InvalidInput):
        analyze(np.zeros((2, 0)), FS)
    with pytest.raises(InvalidInput):
        analyze(np.zeros(100), FS, frame_ms=0.01)
    good = analyze(np.zeros(1000), FS)
    bad = StftTensor(good.values[:, :100, :], FS, 512, 256)
    with pytest.raises(InvalidInput):
        synthesize(bad)
