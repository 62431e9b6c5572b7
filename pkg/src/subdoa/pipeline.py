"""Streaming per-frame localization pipeline.

One pass over the STFT frames maintains the speech/noise covariance
recursions and the reference-pair coherence track, gates bins on CDR,
decomposes only the gated bins, and fuses the per-bin spectra into one
DoaEstimate per (method, condition) pair per evaluated frame.  Running
several pairs in the same pass shares the expensive decompositions.
"""

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import stft
from .covariance import (CovarianceState, FrameClass, SpeechPresenceTracker,
                         classify_frame, smoothing_factor, update, whiten)
from .errors import InvalidInput
from .fusion import (BinAssociation, CoherenceTracker, associate_bins,
                     cdr_estimate, diffuse_coherence, estimate_itds,
                     fuse_and_argmax, interaural_phase, oracle_cdr_db,
                     select_frequency_subset)
from .prototypes import SPEED_OF_SOUND, PrototypeSet
from .spectra import CONDITIONS, METHODS, frame_spectra, normalize_sps
from .subspace import decompose_bins

log = logging.getLogger(__name__)

N_SUB = 4                 # calibrated sub-array channels, always the leading ones
REFERENCE_PAIR = (0, 2)   # front-left / front-right: coherence, ITD and phase pair
CDR_THRESHOLDS_DB = {"music": -3.0, "rtf": -5.0}


@dataclass
class PipelineParams:
    methods: tuple = METHODS
    conditions: tuple = CONDITIONS
    n_speakers: int = 1
    sample_rate: int = 16000
    frame_ms: float = 32.0
    tau_speech: float = 0.25
    tau_noise: float = 0.50
    min_updates: int = 10
    reference: int = 0
    pair_spacing: float = 0.17   # meters between the REFERENCE_PAIR mics
    oracle_vad: bool = False     # frame speech flags from SceneTruth activity
    oracle_gating: bool = False  # CDR and ITDs from SceneTruth
    max_itd: float = None        # default: pair propagation time + one sample
    speed_of_sound: float = SPEED_OF_SOUND
    cdr_thresholds_db: dict = field(default_factory=lambda: dict(CDR_THRESHOLDS_DB))
    # completion error scales with the conditioning of the sub-array rows of
    # the noise basis; bins above the limit are dropped from he_he fusion
    completion_cond_limit: float = None
    # bins whose interaural phase fits no speaker hypothesis at least this
    # well stay unassigned (overlapped or corrupted bins)
    association_floor: float = None


@dataclass
class PipelineResult:
    """Per-pair estimate streams plus bookkeeping counters."""

    angles_deg: np.ndarray
    estimates: dict            # (method, condition) -> [DoaEstimate, ...]
    frames_total: int
    frames_evaluated: list
    no_estimate: dict          # (method, condition) -> frames with all speakers missing
    degenerate_bins: dict      # (method, condition) -> gated bins dropped as degenerate
    gated_bins: dict           # method -> gated-bin total over evaluated frames


def _invalid_bins(spec, method, condition, n_bins, cond_limit=None):
    # completion failures and degenerate RTF references make a bin's spectrum
    # meaningless for the affected pair; drop the bin from that pair's fusion
    bad = np.zeros(n_bins, dtype=bool)
    if condition == "he_he" and spec.completed is not None:
        bad |= spec.completed.ill_conditioned
        bad |= spec.completed.degenerate.any(axis=1)
        if cond_limit is not None:
            bad |= spec.completed.condition > cond_limit
    if method == "rtf":
        degen = spec.rtf_reference_degenerate.get(condition)
        if degen is not None:
            bad |= degen
        cand = spec.candidate_degenerate.get(condition)
        if cand is not None:
            bad |= cand.any(axis=1)
    return bad


def run_pipeline(signals, prototypes: PrototypeSet, params: PipelineParams,
                 truth=None) -> PipelineResult:
    """Estimate per-frame DOAs for every (method, condition) pair in params.

    signals: (channels, samples) time signals, sub-array channels first and
    the extra device channel (if any) last.  prototypes: unwhitened sub-array
    plane-wave set matching the STFT bin grid.  truth enables the oracle
    activity/gating modes and is otherwise unused.
    """
    x = np.atleast_2d(np.asarray(signals, dtype=np.float64))
    for meth in params.methods:
        if meth not in METHODS:
            raise InvalidInput(f"unknown method {meth!r}")
    for cond in params.conditions:
        if cond not in CONDITIONS:
            raise InvalidInput(f"unknown condition {cond!r}")
    if prototypes.kind != "atf":
        raise InvalidInput("pipeline prototypes must be transfer-function vectors")
    m = prototypes.values.shape[2]
    need_sub = "h_h" in params.conditions
    need_full = any(c != "h_h" for c in params.conditions)
    if need_full and x.shape[0] != m + 1:
        raise InvalidInput("conditions with the extra device need one channel "
                           "beyond the prototype set")
    if x.shape[0] < m:
        raise InvalidInput("fewer signal channels than prototype channels")
    if prototypes.sample_rate != params.sample_rate:
        raise InvalidInput("prototype and signal sample rates differ")
    if (params.oracle_vad or params.oracle_gating) and truth is None:
        raise InvalidInput("oracle activity/gating mode needs scene truth")

    tensor = stft.analyze(x, params.sample_rate, params.frame_ms)
    if prototypes.values.shape[0] != tensor.n_bins:
        raise InvalidInput("prototype set does not match the frame bin grid")
    n_ch, n_bins, n_frames = tensor.values.shape
    freqs = tensor.frequencies
    frame_len = tensor.frame_len
    hop = tensor.hop
    fs = params.sample_rate

    alpha_y = smoothing_factor(params.tau_speech, hop, fs)
    alpha_u = smoothing_factor(params.tau_noise, hop, fs)
    state = CovarianceState.create(n_ch, n_bins, alpha_y, alpha_u)
    coh = CoherenceTracker.create(n_bins, alpha_y)
    gamma_d = diffuse_coherence(freqs, params.pair_spacing, params.speed_of_sound)
    spp = SpeechPresenceTracker(n_ch, n_bins)
    a, b = REFERENCE_PAIR

    activity = None
    cdr_oracle = None
    itds_oracle = None
    if params.oracle_vad:
        activity = truth.activity(frame_len, hop)
        if activity.shape[1] < n_frames:
            raise InvalidInput("truth activity does not cover every frame")
    if params.oracle_gating:
        pair = [a, b]
        # per-bin coherent power is the dominant speaker's direct path; a
        # competing speaker's direct energy counts against the bin, since a
        # bin shared by two coherent sources has no single direction
        per_spk = np.stack([
            np.mean(np.abs(stft.analyze(truth.direct_per_speaker[j][pair], fs,
                                        params.frame_ms).values) ** 2, axis=0)
            for j in range(truth.n_speakers)
        ])
        other = stft.analyze(truth.reverb[pair] + truth.noise[pair], fs,
                             params.frame_ms)
        dominant = per_spk.max(axis=0)
        rest = per_spk.sum(axis=0) - dominant
        cdr_oracle = oracle_cdr_db(
            dominant, np.mean(np.abs(other.values) ** 2, axis=0) + rest)
        itds_oracle = truth.geometric_itds(REFERENCE_PAIR, params.speed_of_sound)

    max_itd = params.max_itd
    if max_itd is None:
        max_itd = params.pair_spacing / params.speed_of_sound + 1.0 / fs

    keys = [(meth, cond) for meth in params.methods for cond in params.conditions]
    result = PipelineResult(
        angles_deg=np.asarray(prototypes.angles_deg, dtype=np.float64),
        estimates={k: [] for k in keys},
        frames_total=n_frames,
        frames_evaluated=[],
        no_estimate={k: 0 for k in keys},
        degenerate_bins={k: 0 for k in keys},
        gated_bins={meth: 0 for meth in params.methods},
    )
    j = params.n_speakers

    for l in range(n_frames):
        frame = tensor.values[:, :, l]
        if params.oracle_vad:
            speech = bool(activity[:, l].any())
        else:
            speech = classify_frame(spp, frame) is FrameClass.SPEECH_AND_NOISE
        update(state, frame,
               FrameClass.SPEECH_AND_NOISE if speech else FrameClass.NOISE_ONLY)
        coh.update(frame[a], frame[b])
        if not speech or not state.warmed_up(params.min_updates):
            continue
        if params.oracle_vad and not activity[:, l].all():
            # evaluation wants every speaker audible; partially active frames
            # keep feeding the recursions but produce no estimate
            continue

        cdr_db = cdr_oracle[:, l] if params.oracle_gating else cdr_estimate(coh, gamma_d)
        masks = {meth: select_frequency_subset(cdr_db, params.cdr_thresholds_db[meth])
                 for meth in params.methods}
        union = np.logical_or.reduce(list(masks.values()))
        result.frames_evaluated.append(l)
        for meth in params.methods:
            result.gated_bins[meth] += int(masks[meth].sum())
        if not union.any():
            for key in keys:
                result.estimates[key].append(_empty_estimate(j, l))
                result.no_estimate[key] += 1
            continue

        dec_ha = None
        dec_full = None
        if need_sub:
            phi_w, low, _ = whiten(state.phi_y[union][:, :m, :m],
                                   state.phi_u[union][:, :m, :m])
            dec_ha = decompose_bins(phi_w, low)
        if need_full:
            phi_w, low, _ = whiten(state.phi_y[union], state.phi_u[union])
            dec_full = decompose_bins(phi_w, low)
        spec = frame_spectra(prototypes.values[union], dec_ha, dec_full,
                             params.reference, params.methods, params.conditions)

        if j == 1:
            itds = np.zeros(1)
        elif params.oracle_gating:
            itds = itds_oracle
        else:
            itds = estimate_itds(coh.s_ab, fs, frame_len, j, max_itd)
        indicator = associate_bins(interaural_phase(frame[a, union], frame[b, union]),
                                   itds, freqs[union],
                                   None if j == 1 else params.association_floor)

        for key in keys:
            meth, cond = key
            p = spec.spectra[key]
            bad = _invalid_bins(spec, meth, cond, p.shape[0],
                                params.completion_cond_limit)
            result.degenerate_bins[key] += int(bad.sum())
            if meth == "music":
                p = normalize_sps(p)
            assoc = BinAssociation(indicator, masks[meth][union] & ~bad, itds)
            est = fuse_and_argmax(p, assoc, result.angles_deg, l)
            result.estimates[key].append(est)
            if est.missing.all():
                result.no_estimate[key] += 1
    return result


def _empty_estimate(n_speakers, frame_index):
    from .fusion import DoaEstimate
    return DoaEstimate(angles=np.full(n_speakers, np.nan), frame_index=frame_index)


def run_condition(signals, prototypes: PrototypeSet, method: str, condition: str,
                  params: PipelineParams = None, truth=None):
    """Single-pair convenience wrapper; returns the per-frame estimate list."""
    base = params if params is not None else PipelineParams()
    res = run_pipeline(signals, prototypes,
                       replace(base, methods=(method,), conditions=(condition,)),
                       truth)
    return res.estimates[(method, condition)]
