"""Accuracy metric, benchmark grid, and report artifacts.

The benchmark sweeps DOA pairs x SNR x reverberation and repeats each
scene for several placements of the extra device.  All placements share
one render (the extra channels are appended to a single simulation) and
the sub-array-only condition is computed once per scene, since it cannot
depend on where the extra device sits.
"""

import csv
import itertools
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .errors import InvalidInput
from .pipeline import PipelineParams, run_pipeline
from .prototypes import DirectionGrid, generate_freefield_set
from .sim import SceneTruth, ScenarioConfig, simulate_scene
from .spectra import CONDITIONS, METHODS

log = logging.getLogger(__name__)


def circular_error_deg(a, b):
    """Absolute angular difference wrapped to [0, 180]."""
    return np.abs((np.asarray(a, dtype=float) - np.asarray(b, dtype=float) + 180.0)
                  % 360.0 - 180.0)


def accuracy(estimates, truth_doas_deg, tolerance_deg=5.0) -> float:
    """Fraction of speaker estimates within tolerance of their truth.

    Per frame the estimates are matched to the truths by the one-to-one
    assignment that maximizes the number of hits (order does not matter).
    Frames where every speaker is missing do not count toward the
    denominator; a missing estimate in an otherwise valid frame counts as
    incorrect for that speaker.
    """
    truths = np.atleast_1d(np.asarray(truth_doas_deg, dtype=float))
    n_spk = len(truths)
    orders = list(itertools.permutations(range(n_spk)))
    correct = 0
    frames = 0
    for est in estimates:
        angles = np.asarray(getattr(est, "angles", est), dtype=float)
        if angles.shape != (n_spk,):
            raise InvalidInput("each frame needs one estimate slot per speaker")
        if np.isnan(angles).all():
            continue
        frames += 1
        best = 0
        for order in orders:
            err = circular_error_deg(angles[list(order)], truths)
            hits = int(np.sum(~np.isnan(angles[list(order)]) & (err <= tolerance_deg)))
            if hits > best:
                best = hits
        correct += best
    if frames == 0:
        return 0.0
    return correct / (n_spk * frames)


# six desk placements for the extra device: a ring of 0.45 m around the
# array center at (2.25, 2.0), heights cycling through laptop / tabletop /
# shelf level, offset 15 degrees from the candidate-grid multiples of 30
DESK_EMIC_POSITIONS = (
    (2.685, 2.116, 1.2),
    (2.366, 2.435, 1.0),
    (1.932, 2.318, 1.4),
    (1.815, 1.884, 1.2),
    (2.134, 1.565, 1.0),
    (2.568, 1.682, 1.4),
)


@dataclass
class BenchmarkConfig:
    """Scenario grid and run options for the desk-scale sweep."""

    doa_step_deg: float = 30.0
    pair_offset_deg: float = 90.0
    snrs_db: tuple = (0.0, 10.0, 20.0)
    t60s: tuple = (0.0, 0.31)
    emic_positions: tuple = DESK_EMIC_POSITIONS
    room: tuple = (4.5, 4.0, 2.5)
    array_center: tuple = (2.25, 2.0, 1.2)
    speaker_distance: float = 1.0
    duration: float = 3.0
    lead_silence: float = 0.8
    sample_rate: int = 16000
    seed: int = 20240
    methods: tuple = METHODS
    conditions: tuple = CONDITIONS
    n_speakers: int = 2
    oracle_gating: bool = False
    full_grid: bool = False
    tolerance_deg: float = 5.0
    completion_cond_limit: float = None
    association_floor: float = 0.75

    def doa_pairs(self):
        """Speaker DOA pairs; the default grid pairs each angle with the one
        a fixed offset away, the full grid takes all ordered pairs."""
        angles = np.arange(-180.0 + self.doa_step_deg, 180.0 + 1e-9,
                           self.doa_step_deg)
        wrap = lambda a: (a + 180.0) % 360.0 - 180.0
        if self.full_grid:
            return [(float(a), float(b)) for a in angles for b in angles
                    if wrap(a - b) != 0.0]
        return [(float(a), float(wrap(a + self.pair_offset_deg))) for a in angles]

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "BenchmarkConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise InvalidInput(f"bad benchmark config: {e}") from e
        try:
            cfg = cls(**data)
        except TypeError as e:
            raise InvalidInput(f"bad benchmark config field: {e}") from e
        for name in ("snrs_db", "t60s", "methods", "conditions", "room",
                     "array_center"):
            setattr(cfg, name, tuple(getattr(cfg, name)))
        cfg.emic_positions = tuple(tuple(p) for p in cfg.emic_positions)
        return cfg


@dataclass
class AccuracyReport:
    rows: list                    # one dict per scenario x method x condition
    aggregates: dict              # nested means over the grid dimensions
    diagnostics: dict
    failures: list = field(default_factory=list)


def _scene_variant(truth: SceneTruth, mixture, emic_index):
    idx = [0, 1, 2, 3, 4 + emic_index]
    sub = SceneTruth(
        doas_deg=truth.doas_deg,
        speaker_positions=truth.speaker_positions,
        mic_positions=truth.mic_positions[idx],
        direct_per_speaker=truth.direct_per_speaker[:, idx],
        reverb=truth.reverb[idx],
        noise=truth.noise[idx],
        sample_rate=truth.sample_rate,
    )
    return mixture[idx], sub


def _pair_stats(res, key, doas, tolerance_deg):
    ests = res.estimates[key]
    return {
        "acc": accuracy(ests, doas, tolerance_deg),
        "frames": len(ests),
        "no_estimate": res.no_estimate[key],
        "degenerate_bins": res.degenerate_bins[key],
    }


def run_base_scene(config: BenchmarkConfig, scene_index: int, doa_pair, snr_db,
                   t60) -> list:
    """All rows for one (DOA pair, SNR, T60): every device placement,
    method, and condition, from a single render."""
    cfg = ScenarioConfig(
        speaker_doas_deg=list(doa_pair),
        room=list(config.room),
        speaker_distance=config.speaker_distance,
        snr_db=snr_db,
        duration=config.duration,
        lead_silence=config.lead_silence,
        sample_rate=config.sample_rate,
        seed=config.seed + scene_index,
        t60=t60,
        array_center=list(config.array_center),
        emic_position=list(config.emic_positions[0]),
    )
    mics = np.vstack([cfg.mic_positions()[:4], np.asarray(config.emic_positions)])
    mixture, truth = simulate_scene(cfg, mic_positions=mics)

    n_bins = 512 // 2 + 1
    # desk ranges put the speakers in the array's near field, so the
    # prototypes carry the matching wavefront curvature
    proto = generate_freefield_set(truth.mic_positions[:4], DirectionGrid.uniform(5.0),
                                   n_bins, config.sample_rate, scope="ha",
                                   source_distance=config.speaker_distance)
    base = PipelineParams(
        methods=tuple(config.methods),
        conditions=tuple(config.conditions),
        n_speakers=config.n_speakers,
        sample_rate=config.sample_rate,
        oracle_vad=True,
        oracle_gating=config.oracle_gating,
        completion_cond_limit=config.completion_cond_limit,
        association_floor=config.association_floor,
    )
    scenario = {"doa_a": doa_pair[0], "doa_b": doa_pair[1], "snr_db": snr_db,
                "t60": t60}

    sub_conditions = tuple(c for c in config.conditions if c == "h_h")
    full_conditions = tuple(c for c in config.conditions if c != "h_h")
    sub_stats = {}
    rows = []
    for e, pos in enumerate(config.emic_positions):
        mix_v, truth_v = _scene_variant(truth, mixture, e)
        if e == 0:
            res = run_pipeline(mix_v, proto, base, truth_v)
            for meth in config.methods:
                for cond in sub_conditions:
                    sub_stats[(meth, cond)] = _pair_stats(res, (meth, cond),
                                                          truth.doas_deg,
                                                          config.tolerance_deg)
        elif full_conditions:
            res = run_pipeline(mix_v, proto,
                               replace(base, conditions=full_conditions), truth_v)
        else:
            res = None
        for meth in config.methods:
            for cond in config.conditions:
                if cond in sub_conditions:
                    stats = sub_stats[(meth, cond)]
                else:
                    stats = _pair_stats(res, (meth, cond), truth.doas_deg,
                                        config.tolerance_deg)
                rows.append(dict(scenario, emic_index=e, emic_x=pos[0],
                                 emic_y=pos[1], emic_z=pos[2], method=meth,
                                 condition=cond, **stats))
    return rows


def _worker(args):
    return run_base_scene(*args)


def run_benchmark(config: BenchmarkConfig, out_dir=None) -> AccuracyReport:
    """Sweep the scenario grid and aggregate accuracies.

    Scene-level failures are logged and excluded rather than aborting the
    sweep.  SUBDOA_THREADS > 1 distributes base scenes over processes;
    results are sorted by scenario key before aggregation either way.
    """
    grid = [(pair, snr, t60)
            for pair in config.doa_pairs()
            for snr in config.snrs_db
            for t60 in config.t60s]
    tasks = [(config, i, pair, snr, t60)
             for i, (pair, snr, t60) in enumerate(grid)]
    n_workers = int(os.environ.get("SUBDOA_THREADS", "1") or "1")

    rows = []
    failures = []
    def consume(task, outcome, err=None):
        if err is not None:
            key = {"doa_pair": task[2], "snr_db": task[3], "t60": task[4]}
            log.error("scene %s failed: %s", key, err)
            failures.append(dict(key, error=str(err)))
        else:
            rows.extend(outcome)

    if n_workers > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            futures = [(t, pool.submit(_worker, t)) for t in tasks]
            for t, fut in futures:
                try:
                    consume(t, fut.result())
                except Exception as e:  # noqa: BLE001 - sweep must survive
                    consume(t, None, e)
    else:
        for t in tasks:
            try:
                consume(t, _worker(t))
            except Exception as e:  # noqa: BLE001 - sweep must survive
                consume(t, None, e)

    order = ("doa_a", "doa_b", "snr_db", "t60", "emic_index", "method", "condition")
    rows.sort(key=lambda r: tuple(r[k] for k in order))
    report = AccuracyReport(rows=rows, aggregates=_aggregate(rows),
                            diagnostics=_diagnostics(rows), failures=failures)
    if out_dir is not None:
        write_report(report, config, out_dir)
    return report


def _mean_acc(rows):
    return float(np.mean([r["acc"] for r in rows])) if rows else float("nan")


def _group_means(rows, dims):
    keys = sorted({tuple(r[d] for d in dims) for r in rows})
    out = {}
    for key in keys:
        sel = [r for r in rows if tuple(r[d] for d in dims) == key]
        out["/".join(str(k) for k in key)] = _mean_acc(sel)
    return out


def _aggregate(rows):
    return {
        "overall": _group_means(rows, ("method", "condition")),
        "by_emic": _group_means(rows, ("method", "condition", "emic_index")),
        "by_snr": _group_means(rows, ("method", "condition", "snr_db")),
        "by_t60": _group_means(rows, ("method", "condition", "t60")),
    }


def _diagnostics(rows):
    out = {}
    for r in rows:
        key = f'{r["method"]}/{r["condition"]}'
        d = out.setdefault(key, {"no_estimate": 0, "degenerate_bins": 0, "frames": 0})
        d["no_estimate"] += r["no_estimate"]
        d["degenerate_bins"] += r["degenerate_bins"]
        d["frames"] += r["frames"]
    return out


CSV_COLUMNS = ("doa_a", "doa_b", "snr_db", "t60", "emic_index", "emic_x", "emic_y",
               "emic_z", "method", "condition", "acc", "frames", "no_estimate",
               "degenerate_bins")


def write_report(report: AccuracyReport, config: BenchmarkConfig, out_dir) -> None:
    """CSV of rows, JSON summary, and one accuracy plot per method."""
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "results.csv"), "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        w.writeheader()
        for r in report.rows:
            row = dict(r)
            row["acc"] = f'{row["acc"]:.6f}'
            w.writerow(row)
    summary = {
        "config": json.loads(config.to_json()),
        "aggregates": report.aggregates,
        "diagnostics": report.diagnostics,
        "failures": report.failures,
        "n_rows": len(report.rows),
    }
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    for method in sorted({r["method"] for r in report.rows}):
        path = os.path.join(out_dir, f"accuracy_{method}.svg")
        plot_accuracy(report.rows, method, path)


def plot_accuracy(rows, method, path) -> None:
    """Violin + strip of per-placement accuracy, one group per condition."""
    import matplotlib
    matplotlib.use("Agg", force=False)
    import matplotlib.pyplot as plt

    rows = [r for r in rows if r["method"] == method]
    conditions = sorted({r["condition"] for r in rows})
    emics = sorted({r["emic_index"] for r in rows})
    fig, ax = plt.subplots(figsize=(1.8 + 1.4 * len(emics), 4.0))
    colors = plt.get_cmap("tab10")
    width = 0.8 / max(len(conditions), 1)
    rng = np.random.default_rng(0)
    for ci, cond in enumerate(conditions):
        xs, data = [], []
        for e in emics:
            vals = [r["acc"] for r in rows
                    if r["condition"] == cond and r["emic_index"] == e]
            if vals:
                xs.append(e + (ci - (len(conditions) - 1) / 2) * width)
                data.append(vals)
        if not data:
            continue
        parts = ax.violinplot(data, positions=xs, widths=width * 0.9,
                              showmeans=True, showextrema=False)
        for body in parts["bodies"]:
            body.set_facecolor(colors(ci))
            body.set_alpha(0.35)
        parts["cmeans"].set_color(colors(ci))
        for x, vals in zip(xs, data):
            jitter = (rng.random(len(vals)) - 0.5) * width * 0.5
            ax.plot(x + jitter, vals, ".", color=colors(ci), markersize=2.5,
                    alpha=0.6)
        ax.plot([], [], "s", color=colors(ci), label=cond)
    ax.set_xticks(list(emics))
    ax.set_xlabel("device placement index")
    ax.set_ylabel("accuracy")
    ax.set_ylim(-0.02, 1.02)
    ax.set_title(method)
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
