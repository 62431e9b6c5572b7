"""Synthetic scenes: shoebox reverberation, diffuse noise, ground truth.

Scenes are built for a free-field array of two 2-mic clusters (left/right,
front/rear) plus one extra microphone, channel order

    0 left-front, 1 left-rear, 2 right-front, 3 right-rear, 4 extra.

Azimuth 0 deg looks along +x (front), 90 deg along +y (left ear side).
The mixture decomposes sample-exactly into per-speaker direct paths, the
reverberant remainder, and noise; everything is deterministic in the seed.
"""

import json
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy.io import wavfile
from scipy.signal import fftconvolve

from .backend import kernels as K
from .errors import InvalidInput
from .prototypes import SPEED_OF_SOUND, DirectionGrid, generate_freefield_set
from .stft import analyze, frame_count

RIR_TAPS = 16  # windowed-sinc support of one image contribution


def ha_mic_positions(center, spacing=0.17, pitch=0.02) -> np.ndarray:
    """Two 2-mic clusters on the +-y axis, front mics toward +x."""
    cx, cy, cz = center
    return np.array([
        [cx + pitch / 2, cy + spacing / 2, cz],
        [cx - pitch / 2, cy + spacing / 2, cz],
        [cx + pitch / 2, cy - spacing / 2, cz],
        [cx - pitch / 2, cy - spacing / 2, cz],
    ])


def reflection_from_t60(room, t60) -> float:
    """Uniform wall reflection coefficient from Eyring's relation."""
    lx, ly, lz = room
    if t60 <= 0.0:
        raise InvalidInput("t60 must be positive")
    volume = lx * ly * lz
    surface = 2.0 * (lx * ly + lx * lz + ly * lz)
    return float(np.exp(-0.163 * volume / (2.0 * surface * t60)))


@dataclass
class ScenarioConfig:
    """Everything needed to rebuild a scene bit-exactly."""

    speaker_doas_deg: list
    room: list = field(default_factory=lambda: [6.0, 5.0, 2.7])
    speaker_distance: float = 2.0
    snr_db: float = 10.0
    duration: float = 3.0
    lead_silence: float = 0.4
    sample_rate: int = 16000
    seed: int = 0
    t60: float = 0.0               # 0 -> direct path only
    max_order: int = 0
    reflection_coeff: float = None  # explicit override of the Eyring value
    array_center: list = field(default_factory=lambda: [3.0, 2.5, 1.2])
    ha_spacing: float = 0.17
    ha_pitch: float = 0.02
    emic_position: list = field(default_factory=lambda: [4.0, 3.5, 1.2])

    def __post_init__(self):
        self.speaker_doas_deg = [float(x) for x in self.speaker_doas_deg]
        self.room = [float(x) for x in self.room]
        self.array_center = [float(x) for x in self.array_center]
        self.emic_position = [float(x) for x in self.emic_position]
        doas = np.asarray(self.speaker_doas_deg, dtype=float)
        if len(set(np.round(doas, 6))) != len(doas):
            raise InvalidInput("speakers must not be co-located")
        if self.duration < self.lead_silence:
            raise InvalidInput("duration must cover the leading noise segment")
        if self.t60 > 0.0 and self.max_order == 0:
            self.max_order = 10  # enough tail for the desk-scale presets
        room = np.asarray(self.room, dtype=float)
        for pos in [self.array_center, self.emic_position, *self.speaker_positions()]:
            p = np.asarray(pos, dtype=float)
            if np.any(p <= 0.0) or np.any(p >= room):
                raise InvalidInput(f"position {list(p)} outside the room {list(room)}")

    def speaker_positions(self) -> np.ndarray:
        out = []
        for theta in np.deg2rad(np.asarray(self.speaker_doas_deg, dtype=float)):
            d = np.array([np.cos(theta), np.sin(theta), 0.0])
            out.append(np.asarray(self.array_center) + self.speaker_distance * d)
        return np.array(out).reshape(-1, 3)

    def mic_positions(self) -> np.ndarray:
        ha = ha_mic_positions(self.array_center, self.ha_spacing, self.ha_pitch)
        return np.vstack([ha, np.asarray(self.emic_position, dtype=float)[None]])

    def reflection(self) -> float:
        if self.reflection_coeff is not None:
            return float(self.reflection_coeff)
        if self.t60 <= 0.0:
            return 0.0
        return reflection_from_t60(self.room, self.t60)

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, path) -> "ScenarioConfig":
        with open(path) as fh:
            raw = json.load(fh)
        try:
            return cls(**raw)
        except TypeError as exc:
            raise InvalidInput(f"bad scenario config: {exc}") from exc


def _image_sets(room_len, src, max_order):
    """1-d image coordinates and wall-hit counts: x = 2 m L + (1-2p) s."""
    span = max_order // 2 + 1
    m = np.arange(-span, span + 1)
    coords, hits = [], []
    for p in (0, 1):
        coords.append(2.0 * m * room_len + (1 - 2 * p) * src)
        hits.append(np.abs(m - p) + np.abs(m))
    return np.concatenate(coords), np.concatenate(hits)


def image_source_rir(room, src_pos, mic_pos, sample_rate, max_order=0,
                     reflection=0.0, c=SPEED_OF_SOUND, length=None) -> np.ndarray:
    """Shoebox impulse response from mirrored sources.

    Each image lands as a 16-tap Hann-windowed sinc at its fractional delay
    with amplitude reflection^hits / (4 pi r).  max_order caps the total
    wall-hit count; order 0 is the direct path alone.
    """
    room = np.asarray(room, dtype=float)
    src = np.asarray(src_pos, dtype=float)
    mic = np.asarray(mic_pos, dtype=float)
    if np.any(src <= 0.0) or np.any(src >= room) or np.any(mic <= 0.0) or np.any(mic >= room):
        raise InvalidInput("source and microphone must lie inside the room")
    if np.linalg.norm(src - mic) < 1e-9:
        raise InvalidInput("source coincides with the microphone")
    if max_order < 0:
        raise InvalidInput("max_order must be >= 0")

    per_axis = [_image_sets(room[i], src[i], max_order) for i in range(3)]
    cx, hx = per_axis[0]
    cy, hy = per_axis[1]
    cz, hz = per_axis[2]
    hits = hx[:, None, None] + hy[None, :, None] + hz[None, None, :]
    keep = hits <= max_order
    ix, iy, iz = np.nonzero(keep)
    pos = np.stack([cx[ix], cy[iy], cz[iz]], axis=1)
    n_hits = hits[keep]
    amps = np.where(n_hits > 0, float(reflection) ** n_hits, 1.0)
    live = amps != 0.0
    pos, amps = pos[live], amps[live]

    # the accumulation kernel applies the 1 / (4 pi r) spreading loss
    dist = np.linalg.norm(pos - mic[None, :], axis=1)
    if length is None:
        length = int(np.ceil(dist.max() / c * sample_rate)) + 2 * RIR_TAPS
    return K.rir_accumulate(int(length), np.ascontiguousarray(pos, np.float64),
                            np.ascontiguousarray(amps, np.float64),
                            np.ascontiguousarray(mic, np.float64),
                            float(sample_rate), float(c))


def hybrid_rir(room, src, mic, fs, t60, max_order, reflection, seed_key,
               c=SPEED_OF_SOUND) -> np.ndarray:
    """Image-source early part continued by a stochastic late tail.

    Reflections beyond max_order are replaced by decaying noise whose level
    continues the early part's trailing envelope and whose decay rate
    matches the target reverberation time.  seed_key makes the tail a pure
    function of its identity (scene seed, source, microphone position), so
    renders with different microphone subsets stay consistent.
    """
    h_early = image_source_rir(room, src, mic, fs, max_order=max_order,
                               reflection=reflection, c=c)
    if t60 <= 0.0:
        return h_early
    window = max(int(0.008 * fs), 8)
    tail_rms = np.sqrt(np.mean(h_early[-window:] ** 2))
    if tail_rms <= 0.0:
        return h_early
    n_tail = int(round(1.0 * t60 * fs))
    decay = 3.0 * np.log(10.0) / (t60 * fs)      # amplitude e-folding per sample
    rng = np.random.default_rng(seed_key)
    tail = rng.normal(0.0, tail_rms, n_tail) * np.exp(-decay * np.arange(n_tail))
    return np.concatenate([h_early, tail])


def speech_shape(freqs) -> np.ndarray:
    """Long-term speech-like magnitude: flat shoulder, -6 dB/oct above 500 Hz,
    rolled off below 100 Hz."""
    f = np.asarray(freqs, dtype=float)
    lowcut = f / np.sqrt(f**2 + 100.0**2)
    tilt = 500.0 / np.sqrt(f**2 + 500.0**2)
    return lowcut * tilt


def speech_shaped_noise(n_samples, sample_rate, rng) -> np.ndarray:
    white = rng.standard_normal(n_samples)
    spec = np.fft.rfft(white) * speech_shape(np.fft.rfftfreq(n_samples, 1.0 / sample_rate))
    x = np.fft.irfft(spec, n=n_samples)
    return x / np.sqrt(np.mean(x**2))


def harmonic_voice(n, sample_rate, rng, fundamental_hz, drift=0.006,
                   noise_mix=0.12) -> np.ndarray:
    """Voiced-speech-like carrier: a drifting harmonic comb under the
    speech-shaped envelope, plus a weak noise floor.

    Talkers with different fundamentals occupy mostly disjoint bins, which
    is what makes concurrent speech separable per frequency.
    """
    f0 = fundamental_hz * (1.0 + drift * (2.0 * rng.random() - 1.0)
                           + drift * np.linspace(-1.0, 1.0, n) * (2.0 * rng.random() - 1.0))
    phase = 2.0 * np.pi * np.cumsum(f0) / sample_rate
    out = np.zeros(n)
    top = 0.95 * sample_rate / 2.0
    for k in range(1, int(top / np.max(f0)) + 1):
        amp = speech_shape(np.array([k * fundamental_hz]))[0]
        out += amp * np.sin(k * phase + rng.uniform(0.0, 2.0 * np.pi))
    rms = np.sqrt(np.mean(out**2))
    if rms > 0:
        out /= rms
    return out + noise_mix * speech_shaped_noise(n, sample_rate, rng)


def speech_like_bursts(duration, sample_rate, rng, burst=(0.25, 0.45),
                       gap=(0.15, 0.35), edge=0.01,
                       fundamental_hz=None) -> np.ndarray:
    """Speech-like signal with on/off Hann-edged burst envelopes.

    The carrier is speech-shaped noise, or a harmonic voice when a
    fundamental is given.
    """
    n = int(round(duration * sample_rate))
    if fundamental_hz is None:
        carrier = speech_shaped_noise(n, sample_rate, rng)
    else:
        carrier = harmonic_voice(n, sample_rate, rng, fundamental_hz)
    env = np.zeros(n)
    ramp = int(edge * sample_rate)
    t = 0
    while t < n:
        blen = int(rng.uniform(*burst) * sample_rate)
        seg = np.ones(min(blen, n - t))
        if len(seg) > 2 * ramp:
            win = np.hanning(2 * ramp)
            seg[:ramp] = win[:ramp]
            seg[-ramp:] = win[ramp:]
        env[t:t + len(seg)] = seg
        t += blen + int(rng.uniform(*gap) * sample_rate)
    return carrier * env


def fibonacci_sphere(n) -> np.ndarray:
    """n nearly uniform unit vectors (golden-angle spiral)."""
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    phi = np.pi * (1.0 + np.sqrt(5.0)) * i
    s = np.sqrt(np.maximum(1.0 - z**2, 0.0))
    return np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=1)


def diffuse_noise(mic_positions, duration, sample_rate, rng, n_directions=128,
                  c=SPEED_OF_SOUND) -> np.ndarray:
    """Isotropic speech-shaped noise as a sum of far-field plane waves."""
    mics = np.asarray(mic_positions, dtype=float)
    n = int(round(duration * sample_rate))
    freqs = np.fft.rfftfreq(n, 1.0 / sample_rate)
    shape = speech_shape(freqs)
    out = np.zeros((len(mics), len(freqs)), dtype=np.complex128)
    for direction in fibonacci_sphere(n_directions):
        spec = np.fft.rfft(rng.standard_normal(n)) * shape
        delays = -(mics @ direction) / c
        out += spec[None, :] * np.exp(-2j * np.pi * freqs[None, :] * delays[:, None])
    x = np.fft.irfft(out, n=n, axis=1) / np.sqrt(n_directions)
    rms = np.sqrt(np.mean(x[: min(4, len(mics))] ** 2))
    return x / rms


def scale_to_snr(speech, noise, target_snr_db, n_reference=4) -> np.ndarray:
    """Scale noise so the broadband SNR over the reference channels matches."""
    sp = np.mean(np.asarray(speech)[:n_reference] ** 2)
    np_ = np.mean(np.asarray(noise)[:n_reference] ** 2)
    if np_ <= 0.0:
        raise InvalidInput("noise power over the reference channels is zero")
    if sp <= 0.0:
        raise InvalidInput("speech power over the reference channels is zero")
    factor = np.sqrt(sp / (np_ * 10.0 ** (target_snr_db / 10.0)))
    return np.asarray(noise) * factor


@dataclass
class SceneTruth:
    """Ground truth carried alongside a simulated mixture."""

    doas_deg: np.ndarray            # (J,)
    speaker_positions: np.ndarray   # (J, 3)
    mic_positions: np.ndarray       # (C, 3)
    direct_per_speaker: np.ndarray  # (J, C, n)
    reverb: np.ndarray              # (C, n)
    noise: np.ndarray               # (C, n)
    sample_rate: int

    @property
    def n_speakers(self) -> int:
        return len(self.doas_deg)

    @property
    def direct(self) -> np.ndarray:
        if self.n_speakers == 0:
            return np.zeros_like(self.noise)
        return self.direct_per_speaker.sum(axis=0)

    @property
    def mixture(self) -> np.ndarray:
        return self.direct + self.reverb + self.noise

    def activity(self, frame_len=512, hop=256, threshold=1e-3) -> np.ndarray:
        """(J, frames) speech-active flags from direct-path frame energy."""
        n = self.noise.shape[1]
        n_frames = frame_count(n, hop)
        out = np.zeros((self.n_speakers, n_frames), dtype=bool)
        for j in range(self.n_speakers):
            x = self.direct_per_speaker[j, 0]
            e = np.array([
                np.sqrt(np.mean(x[l * hop:min(l * hop + frame_len, n)] ** 2))
                for l in range(n_frames)
            ])
            peak = e.max()
            if peak > 0:
                out[j] = e > threshold * peak
        return out

    def true_atfs(self, n_bins) -> np.ndarray:
        """(bins, J, C) free-field plane-wave vectors at the true azimuths."""
        grid = DirectionGrid(angles_deg=np.asarray(self.doas_deg, dtype=float))
        ps = generate_freefield_set(self.mic_positions, grid, n_bins,
                                    self.sample_rate, scope="full")
        return ps.values

    def speaker_psd(self, frame_len=512) -> np.ndarray:
        """(J, bins, frames) direct-path PSD at the reference channel."""
        out = []
        for j in range(self.n_speakers):
            t = analyze(self.direct_per_speaker[j, :1], self.sample_rate,
                        frame_ms=1000.0 * frame_len / self.sample_rate)
            out.append(np.abs(t.values[0]) ** 2)
        return np.array(out)

    def geometric_itds(self, pair=(0, 2), c=SPEED_OF_SOUND) -> np.ndarray:
        """Spherical-wave arrival-time differences, positive when the second
        reference channel lags."""
        a, b = pair
        da = np.linalg.norm(self.speaker_positions - self.mic_positions[a], axis=1)
        db = np.linalg.norm(self.speaker_positions - self.mic_positions[b], axis=1)
        return (db - da) / c


def simulate_scene(cfg: ScenarioConfig, sources=None, mic_positions=None):
    """Render a scene; returns (mixture (C, n), SceneTruth).

    mic_positions overrides the config layout (first four entries must stay
    the calibrated sub-array).  Source draws and the noise field depend only
    on the seed, so a run with extra microphones appended yields exactly the
    channels a plain run would, plus the extras — one render can serve
    several device placements.
    """
    rng = np.random.default_rng(cfg.seed)
    fs = cfg.sample_rate
    n_total = int(round(cfg.duration * fs))
    n_lead = int(round(cfg.lead_silence * fs))
    n_speech = n_total - n_lead
    if mic_positions is None:
        mics = cfg.mic_positions()
    else:
        mics = np.asarray(mic_positions, dtype=np.float64)
        if mics.ndim != 2 or mics.shape[1] != 3 or len(mics) < 4:
            raise InvalidInput("mic override must be (n >= 4, 3) positions")
    n_ch = len(mics)
    speakers = cfg.speaker_positions()
    n_spk = len(speakers)

    if sources is None:
        # distinct fundamentals keep concurrent talkers spectrally disjoint;
        # golden-ratio spacing keeps their harmonic combs from lining up
        sources = [
            speech_like_bursts(n_speech / fs, fs, rng,
                               fundamental_hz=rng.uniform(155.0, 185.0) * 1.618**j)
            for j in range(n_spk)
        ]
    if len(sources) < n_spk:
        raise InvalidInput(f"need {n_spk} source signals, got {len(sources)}")
    sources = [np.asarray(s, dtype=float)[:n_speech] for s in sources]
    for s in sources:
        if len(s) < n_speech:
            raise InvalidInput("source signal shorter than the speech segment")

    beta = cfg.reflection()
    direct = np.zeros((n_spk, n_ch, n_total))
    reverb_per = np.zeros((n_spk, n_ch, n_total))
    for j in range(n_spk):
        for m in range(n_ch):
            h_dir = image_source_rir(cfg.room, speakers[j], mics[m], fs,
                                     max_order=0)
            h_full = h_dir
            if cfg.max_order > 0 and beta != 0.0:
                key = ([int(cfg.seed) & 0xFFFFFFFF, j]
                       + list(np.frombuffer(mics[m].tobytes(), dtype=np.uint32)))
                h_full = hybrid_rir(cfg.room, speakers[j], mics[m], fs, cfg.t60,
                                    cfg.max_order, beta, key)
                h_dir = np.pad(h_dir, (0, len(h_full) - len(h_dir)))
            h_tail = h_full - h_dir
            d = fftconvolve(sources[j], h_dir)[:n_speech]
            r = fftconvolve(sources[j], h_tail)[:n_speech]
            direct[j, m, n_lead:] = d
            reverb_per[j, m, n_lead:] = r

    # equal average broadband speech power per speaker over the HA channels
    for j in range(n_spk):
        p = np.mean((direct[j, :4] + reverb_per[j, :4]) ** 2)
        if p > 0:
            g = 1.0 / np.sqrt(p)
            direct[j] *= g
            reverb_per[j] *= g

    noise = diffuse_noise(mics, cfg.duration, fs, rng)
    speech_all = (direct + reverb_per).sum(axis=0)
    if n_spk > 0:
        noise = scale_to_snr(speech_all, noise, cfg.snr_db)

    truth = SceneTruth(
        doas_deg=np.asarray(cfg.speaker_doas_deg, dtype=float),
        speaker_positions=speakers,
        mic_positions=mics,
        direct_per_speaker=direct,
        reverb=reverb_per.sum(axis=0),
        noise=noise,
        sample_rate=fs,
    )
    return truth.mixture, truth


def build_oracle_covariances(truth: SceneTruth, frame_index, frame_len=512,
                             c=SPEED_OF_SOUND):
    """Exact model covariances for one frame, batched over bins.

    Phi_y = phi_S a a^H + Phi_u with a the dominant speaker's plane-wave
    vector and Phi_u a diffuse-coherence-shaped noise covariance scaled by
    the frame's noise PSD.  Returns (phi_y, phi_u), both (bins, C, C).
    """
    n_bins = frame_len // 2 + 1
    n_ch = len(truth.mic_positions)
    freqs = np.arange(n_bins) * truth.sample_rate / frame_len

    noise_t = analyze(truth.noise[:1], truth.sample_rate,
                      frame_ms=1000.0 * frame_len / truth.sample_rate)
    l = int(frame_index)
    p_noise = np.abs(noise_t.values[0, :, l]) ** 2

    diff = truth.mic_positions[:, None, :] - truth.mic_positions[None, :, :]
    dist = np.linalg.norm(diff, axis=2)
    gamma = np.sinc(2.0 * freqs[:, None, None] * dist[None] / c)
    floor = 1e-12 * (1.0 + p_noise.max())
    phi_u = (p_noise[:, None, None] + floor) * gamma \
        + (1e-4 * p_noise[:, None, None] + floor) * np.eye(n_ch)[None]

    phi_y = phi_u.copy()
    if truth.n_speakers > 0:
        psd = truth.speaker_psd(frame_len)[:, :, l]   # (J, bins)
        dom = np.argmax(psd, axis=0)
        phi_s = psd[dom, np.arange(n_bins)]
        atfs = truth.true_atfs(n_bins)                # (bins, J, C)
        a = atfs[np.arange(n_bins), dom, :]
        phi_y = phi_u + phi_s[:, None, None] * (a[:, :, None] * np.conj(a[:, None, :]))
    return phi_y, phi_u


def write_scene(path, cfg: ScenarioConfig, mixture, truth: SceneTruth) -> None:
    """Persist a scene directory: config.json, mixture.wav, truth.npz."""
    import os

    os.makedirs(path, exist_ok=True)
    cfg.to_json(os.path.join(path, "config.json"))
    wavfile.write(os.path.join(path, "mixture.wav"), cfg.sample_rate,
                  np.asarray(mixture, dtype=np.float64).T)
    np.savez_compressed(
        os.path.join(path, "truth.npz"),
        doas_deg=truth.doas_deg,
        speaker_positions=truth.speaker_positions,
        mic_positions=truth.mic_positions,
        direct_per_speaker=truth.direct_per_speaker,
        reverb=truth.reverb,
        noise=truth.noise,
        sample_rate=truth.sample_rate,
    )


def load_scene(path):
    """Load (cfg, mixture, truth) written by write_scene."""
    import os

    cfg = ScenarioConfig.from_json(os.path.join(path, "config.json"))
    fs, data = wavfile.read(os.path.join(path, "mixture.wav"))
    if fs != cfg.sample_rate:
        raise InvalidInput("mixture sample rate disagrees with the config")
    raw = np.load(os.path.join(path, "truth.npz"))
    truth = SceneTruth(
        doas_deg=raw["doas_deg"],
        speaker_positions=raw["speaker_positions"],
        mic_positions=raw["mic_positions"],
        direct_per_speaker=raw["direct_per_speaker"],
        reverb=raw["reverb"],
        noise=raw["noise"],
        sample_rate=int(raw["sample_rate"]),
    )
    return cfg, np.asarray(data, dtype=np.float64).T, truth
