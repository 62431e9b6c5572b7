"""Recursive covariance tracking with speech-presence gating.

Two exponentially smoothed covariance stacks per bin: a noisy-speech
matrix updated while speech is present and a noise matrix updated in
noise-only frames.  Whitening factorizes the noise matrix (Cholesky with
loading escalation) and congruence-transforms the speech matrix.
"""

import enum
from dataclasses import dataclass, field

import numpy as np

from .backend import kernels as K
from .errors import InvalidInput, NumericalFailure


class FrameClass(enum.Enum):
    NOISE_ONLY = "noise_only"
    SPEECH_AND_NOISE = "speech_and_noise"


def smoothing_factor(time_constant_s: float, hop: int, sample_rate: int) -> float:
    """Recursive smoothing coefficient exp(-hop / (fs * tau))."""
    if time_constant_s <= 0.0 or hop <= 0 or sample_rate <= 0:
        raise InvalidInput("time constant, hop and sample rate must be positive")
    return float(np.exp(-hop / (sample_rate * time_constant_s)))


@dataclass
class CovarianceState:
    """Per-bin covariance stacks and their update bookkeeping."""

    phi_y: np.ndarray
    phi_u: np.ndarray
    alpha_y: float
    alpha_u: float
    n_speech_updates: int = 0
    n_noise_updates: int = 0

    @classmethod
    def create(cls, n_channels: int, n_bins: int, alpha_y: float, alpha_u: float,
               init_scale: float = 1e-6) -> "CovarianceState":
        eye = init_scale * np.eye(n_channels, dtype=np.complex128)
        return cls(
            phi_y=np.tile(eye, (n_bins, 1, 1)),
            phi_u=np.tile(eye, (n_bins, 1, 1)),
            alpha_y=alpha_y,
            alpha_u=alpha_u,
        )

    def warmed_up(self, min_updates: int = 10) -> bool:
        return self.n_speech_updates >= min_updates and self.n_noise_updates >= min_updates


def update(state: CovarianceState, frame: np.ndarray, decision: FrameClass) -> None:
    """Rank-one smoothing update of the stack selected by `decision`.

    frame: (n_channels, n_bins) complex spectra of one STFT frame.
    """
    if frame.shape[0] != state.phi_y.shape[1] or frame.shape[1] != state.phi_y.shape[0]:
        raise InvalidInput("frame shape does not match covariance state")
    outer = np.einsum("ck,dk->kcd", frame, np.conj(frame))
    if decision is FrameClass.SPEECH_AND_NOISE:
        state.phi_y *= state.alpha_y
        state.phi_y += (1.0 - state.alpha_y) * outer
        state.n_speech_updates += 1
    else:
        state.phi_u *= state.alpha_u
        state.phi_u += (1.0 - state.alpha_u) * outer
        state.n_noise_updates += 1


@dataclass
class SpeechPresenceTracker:
    """Simplified decision-directed speech presence estimate.

    The first `warmup_frames` frames are taken as noise-only and build the
    noise floor; afterwards a decision-directed a-priori SNR drives the
    presence probability, averaged over the tracked channels and bins.
    """

    n_channels: int
    n_bins: int
    warmup_frames: int = 10
    snr_smoothing: float = 0.9
    threshold: float = 0.5
    floor_smoothing: float = 0.9
    frame_index: int = 0
    noise_psd: np.ndarray = field(default=None, repr=False)
    xi_prev: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.noise_psd is None:
            self.noise_psd = np.zeros((self.n_channels, self.n_bins))
        if self.xi_prev is None:
            self.xi_prev = np.zeros((self.n_channels, self.n_bins))


def classify_frame(tracker: SpeechPresenceTracker, frame: np.ndarray) -> FrameClass:
    """Classify one frame of (n_channels, n_bins) spectra.

    Warm-up frames always classify as noise-only; the noise floor keeps
    adapting during later noise-only decisions.
    """
    power = np.abs(frame[: tracker.n_channels]) ** 2
    if tracker.frame_index < tracker.warmup_frames:
        n = tracker.frame_index
        tracker.noise_psd = (tracker.noise_psd * n + power) / (n + 1)
        tracker.frame_index += 1
        return FrameClass.NOISE_ONLY
    tracker.frame_index += 1
    floor = np.maximum(tracker.noise_psd, 1e-12 * np.mean(tracker.noise_psd) + 1e-300)
    gamma = power / floor
    xi = tracker.snr_smoothing * tracker.xi_prev + (1.0 - tracker.snr_smoothing) * np.maximum(gamma - 1.0, 0.0)
    tracker.xi_prev = xi
    presence = float(np.mean(xi / (1.0 + xi)))
    if presence >= tracker.threshold:
        return FrameClass.SPEECH_AND_NOISE
    a = tracker.floor_smoothing
    tracker.noise_psd = a * tracker.noise_psd + (1.0 - a) * power
    return FrameClass.NOISE_ONLY


def whiten(phi_y: np.ndarray, phi_u: np.ndarray):
    """Pre-whiten phi_y by the Cholesky factor of phi_u.

    Accepts single (n, n) matrices or (B, n, n) stacks.  Returns
    (phi_y_w, lower, loading) with matching leading shape.
    """
    single = phi_y.ndim == 2
    py = np.ascontiguousarray(np.atleast_3d(phi_y).reshape((-1,) + phi_y.shape[-2:]), np.complex128)
    pu = np.ascontiguousarray(np.atleast_3d(phi_u).reshape((-1,) + phi_u.shape[-2:]), np.complex128)
    if py.shape != pu.shape:
        raise InvalidInput("phi_y and phi_u shapes differ")
    low, loading, ok = K.cholesky(pu)
    if not np.all(ok):
        raise NumericalFailure("noise covariance not factorizable at any loading level")
    phi_w = K.whiten(py, low)
    if single:
        return phi_w[0], low[0], float(loading[0])
    return phi_w, low, loading
