"""Short-time Fourier analysis and weighted overlap-add synthesis.

Square-root periodic Hann windows on both sides at 50% overlap, so the
effective analysis-synthesis window is a plain Hann that sums to one and
interior samples reconstruct exactly.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput


def sqrt_hann(frame_len: int) -> np.ndarray:
    """Square root of the periodic Hann window."""
    n = np.arange(frame_len)
    return np.sqrt(0.5 - 0.5 * np.cos(2.0 * np.pi * n / frame_len))


@dataclass
class StftTensor:
    """Complex STFT coefficients, channels x bins x frames."""

    values: np.ndarray
    sample_rate: int
    frame_len: int
    hop: int

    @property
    def n_channels(self) -> int:
        return self.values.shape[0]

    @property
    def n_bins(self) -> int:
        return self.values.shape[1]

    @property
    def n_frames(self) -> int:
        return self.values.shape[2]

    @property
    def frequencies(self) -> np.ndarray:
        """Bin center frequencies in Hz (one-sided grid)."""
        return np.arange(self.n_bins) * self.sample_rate / self.frame_len


def frame_count(n_samples: int, hop: int) -> int:
    return max(1, int(np.ceil(n_samples / hop)))


def analyze(x, sample_rate: int, frame_ms: float = 32.0) -> StftTensor:
    """STFT of a mono (n,) or multichannel (n_ch, n) signal.

    Frames start every hop = frame_len/2 samples; the trailing partial
    frame is zero-padded.  frame_len = round(frame_ms/1000 * sample_rate)
    rounded down to an even number.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.ndim != 2 or x.shape[1] == 0:
        raise InvalidInput("signal must be (n,) or (n_channels, n) with n > 0")
    frame_len = int(round(frame_ms / 1000.0 * sample_rate))
    frame_len -= frame_len % 2
    if frame_len < 2:
        raise InvalidInput(f"frame of {frame_ms} ms is too short at {sample_rate} Hz")
    hop = frame_len // 2
    n_ch, n = x.shape
    n_frames = frame_count(n, hop)
    padded = np.zeros((n_ch, (n_frames - 1) * hop + frame_len))
    padded[:, :n] = x
    starts = np.arange(n_frames) * hop
    idx = starts[:, None] + np.arange(frame_len)[None, :]
    frames = padded[:, idx] * sqrt_hann(frame_len)[None, None, :]
    spec = np.fft.rfft(frames, axis=2)
    return StftTensor(
        values=np.ascontiguousarray(np.transpose(spec, (0, 2, 1))),
        sample_rate=int(sample_rate),
        frame_len=frame_len,
        hop=hop,
    )


def synthesize(t: StftTensor) -> np.ndarray:
    """Weighted overlap-add inverse of `analyze`.

    Returns (n_channels, (n_frames - 1) * hop + frame_len) samples; the
    interior region [hop, (n_frames - 1) * hop) reconstructs the input
    exactly, the edges are tapered by the missing overlap.
    """
    if t.values.ndim != 3:
        raise InvalidInput("StftTensor values must be (n_channels, n_bins, n_frames)")
    if t.n_bins != t.frame_len // 2 + 1:
        raise InvalidInput("bin count does not match frame length")
    win = sqrt_hann(t.frame_len)
    frames = np.fft.irfft(np.transpose(t.values, (0, 2, 1)), n=t.frame_len, axis=2)
    frames *= win[None, None, :]
    out = np.zeros((t.n_channels, (t.n_frames - 1) * t.hop + t.frame_len))
    for l in range(t.n_frames):
        out[:, l * t.hop : l * t.hop + t.frame_len] += frames[:, l, :]
    return out
