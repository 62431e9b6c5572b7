"""Frequency gating, speaker association, and per-frame fusion.

A two-channel coherence track between the left/right reference microphones
drives everything here: a coherent-to-diffuse ratio gates the bins entering
the broadband sum, GCC-PHAT time differences separate the speakers, and the
gated, speaker-grouped spectra are argmaxed to per-frame DOA estimates.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput

log = logging.getLogger(__name__)

COHERENCE_CLAMP = 1.0 - 1e-6


def diffuse_coherence(freqs, spacing, c=343.0) -> np.ndarray:
    """Spherically diffuse coherence between two points, sinc(2 pi f d / c)."""
    return np.sinc(2.0 * np.asarray(freqs, dtype=np.float64) * spacing / c)


@dataclass
class CoherenceTracker:
    """Recursively smoothed auto/cross spectra of a reference channel pair."""

    s_aa: np.ndarray
    s_bb: np.ndarray
    s_ab: np.ndarray
    alpha: float

    @classmethod
    def create(cls, n_bins: int, alpha: float) -> "CoherenceTracker":
        if not 0.0 <= alpha < 1.0:
            raise InvalidInput("alpha must be in [0, 1)")
        return cls(
            s_aa=np.zeros(n_bins),
            s_bb=np.zeros(n_bins),
            s_ab=np.zeros(n_bins, dtype=np.complex128),
            alpha=alpha,
        )

    def update(self, xa, xb) -> None:
        a = self.alpha
        self.s_aa = a * self.s_aa + (1.0 - a) * np.abs(xa) ** 2
        self.s_bb = a * self.s_bb + (1.0 - a) * np.abs(xb) ** 2
        self.s_ab = a * self.s_ab + (1.0 - a) * xa * np.conj(xb)

    def coherence(self) -> np.ndarray:
        """Gamma = S_ab / sqrt(S_aa S_bb), magnitude clamped below 1."""
        power = self.s_aa * self.s_bb
        live = power > 0.0
        gamma = np.zeros_like(self.s_ab)
        gamma[live] = self.s_ab[live] / np.sqrt(power[live])
        mag = np.abs(gamma)
        over = mag > COHERENCE_CLAMP
        gamma[over] *= COHERENCE_CLAMP / mag[over]
        return gamma


def cdr_from_coherence(gamma, gamma_d) -> np.ndarray:
    """DOA-independent coherent-to-diffuse power ratio, linear scale.

    Bins with no observed power (gamma exactly 0 where the diffuse model is
    not) still get their model value; callers zero dead bins beforehand.
    """
    gamma = np.asarray(gamma, dtype=np.complex128)
    gd = np.asarray(gamma_d, dtype=np.float64)
    mag = np.abs(gamma)
    scale = np.where(mag > COHERENCE_CLAMP, COHERENCE_CLAMP / np.where(mag > 0, mag, 1.0), 1.0)
    gamma = gamma * scale
    re = gamma.real
    mag2 = np.abs(gamma) ** 2
    radicand = gd**2 * re**2 - gd**2 * mag2 + gd**2 - 2.0 * gd * re + mag2
    num = gd * re - mag2 - np.sqrt(np.maximum(radicand, 0.0))
    return np.maximum(0.0, num / (mag2 - 1.0))


def to_db(ratio) -> np.ndarray:
    ratio = np.asarray(ratio, dtype=np.float64)
    out = np.full(ratio.shape, -np.inf)
    live = ratio > 0.0
    out[live] = 10.0 * np.log10(ratio[live])
    return out


def cdr_estimate(tracker: CoherenceTracker, gamma_d) -> np.ndarray:
    """Per-bin CDR in dB from the smoothed tracks; dead bins give -inf."""
    gamma = tracker.coherence()
    cdr = cdr_from_coherence(gamma, gamma_d)
    cdr[tracker.s_aa * tracker.s_bb <= 0.0] = 0.0
    return to_db(cdr)


def oracle_cdr_db(direct_power, other_power) -> np.ndarray:
    """CDR from true per-bin direct and diffuse-plus-noise powers."""
    direct = np.asarray(direct_power, dtype=np.float64)
    other = np.asarray(other_power, dtype=np.float64)
    out = np.full(direct.shape, -np.inf)
    live = direct > 0.0
    out[live] = 10.0 * np.log10(direct[live] / np.maximum(other[live], 1e-300))
    return out


def select_frequency_subset(cdr_db, threshold_db) -> np.ndarray:
    return np.asarray(cdr_db) >= threshold_db


def estimate_itds(s_ab, sample_rate, frame_len, n_speakers, max_itd,
                  min_separation=2) -> np.ndarray:
    """GCC-PHAT time differences from a smoothed cross-spectrum track.

    Convention: positive tau means channel b lags channel a.  The phase
    transform makes the correlation of exp(i 2 pi f tau) peak at lag
    -tau * fs, so reported values negate the peak lag.  Returns n_speakers
    values sorted ascending; missing peaks duplicate the strongest.
    """
    if n_speakers < 1:
        raise InvalidInput("need at least one speaker")
    s_ab = np.asarray(s_ab, dtype=np.complex128)
    mag = np.abs(s_ab)
    w = np.where(mag > 0.0, s_ab / np.where(mag > 0.0, mag, 1.0), 0.0)
    corr = np.fft.irfft(w, n=frame_len)
    max_lag = int(round(max_itd * sample_rate))
    if max_lag < 1:
        raise InvalidInput("max_itd shorter than one sample")
    lags = np.concatenate([np.arange(-max_lag, 0), np.arange(0, max_lag + 1)])
    values = corr[lags % frame_len].copy()

    picked = []
    strongest = None
    for _ in range(n_speakers):
        if not np.any(np.isfinite(values)):
            break
        j = int(np.argmax(values))
        if not np.isfinite(values[j]):
            break
        if strongest is None:
            strongest = int(lags[j])
        picked.append(int(lags[j]))
        values[np.abs(lags - lags[j]) < min_separation] = -np.inf
    if len(picked) < n_speakers:
        log.warning("found %d of %d correlation peaks; duplicating the strongest",
                    len(picked), n_speakers)
        picked.extend([strongest] * (n_speakers - len(picked)))
    taus = -np.array(picked, dtype=np.float64) / sample_rate
    return np.sort(taus)


def interaural_phase(xa, xb) -> np.ndarray:
    """Instantaneous phase difference, positive when channel b lags."""
    return np.angle(np.asarray(xa) * np.conj(np.asarray(xb)))


@dataclass
class BinAssociation:
    """Per-bin speaker indicator, gate mask, and the time differences used."""

    indicator: np.ndarray   # (bins, speakers) one-hot
    subset_mask: np.ndarray  # (bins,) bool
    itds: np.ndarray        # (speakers,) seconds


def associate_bins(phase, itds, freqs, floor=None) -> np.ndarray:
    """One-hot speaker scores cos(phi - 2 pi f tau_j); ties pick smaller j.

    With a floor, bins whose best score stays below it are left unassigned:
    their phase fits no speaker, which marks overlapped or corrupted bins.
    """
    phase = np.asarray(phase, dtype=np.float64)
    itds = np.atleast_1d(np.asarray(itds, dtype=np.float64))
    freqs = np.asarray(freqs, dtype=np.float64)
    if phase.shape != freqs.shape:
        raise InvalidInput("phase and frequency grids differ")
    score = np.cos(phase[:, None] - 2.0 * np.pi * freqs[:, None] * itds[None, :])
    best = np.argmax(score, axis=1)
    indicator = np.zeros(score.shape, dtype=bool)
    indicator[np.arange(len(best)), best] = True
    if floor is not None:
        indicator[score[np.arange(len(best)), best] < floor] = False
    return indicator


@dataclass
class DoaEstimate:
    """Per-frame angles, one per speaker; NaN marks a missing estimate."""

    angles: np.ndarray
    frame_index: int

    @property
    def missing(self) -> np.ndarray:
        return np.isnan(self.angles)


def fuse_and_argmax(p, assoc: BinAssociation, angles_deg,
                    frame_index: int = 0) -> DoaEstimate:
    """Speaker-grouped gated broadband argmax over the direction grid.

    Sums the spectrum over each speaker's gated bins and takes the grid
    argmax; equal scores resolve to the smaller angle.  A speaker with no
    gated bins gets NaN.
    """
    p = np.asarray(p, dtype=np.float64)
    angles_deg = np.asarray(angles_deg, dtype=np.float64)
    if p.ndim != 2 or p.shape[0] != assoc.indicator.shape[0]:
        raise InvalidInput("spectrum and association bin counts differ")
    if p.shape[1] != len(angles_deg):
        raise InvalidInput("spectrum and grid sizes differ")
    n_speakers = assoc.indicator.shape[1]
    out = np.full(n_speakers, np.nan)
    for j in range(n_speakers):
        bins = assoc.subset_mask & assoc.indicator[:, j]
        if not bins.any():
            continue
        pooled = p[bins].sum(axis=0)
        out[j] = angles_deg[int(np.argmax(pooled))]
    return DoaEstimate(angles=out, frame_index=frame_index)
