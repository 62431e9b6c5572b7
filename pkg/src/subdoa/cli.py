"""Command-line entry points.

Subcommands: ``simulate`` renders a scene directory from a scenario config,
``run`` estimates per-frame DOAs for one method/condition on a rendered
scene, ``bench`` sweeps the benchmark grid, and ``protogen`` writes a
prototype-set file from an array-geometry description.  Exit codes: 0 on
success, 2 for configuration problems, 3 for numerical failures.
"""

import argparse
import csv
import json
import sys

import numpy as np

from .errors import (
    DegenerateAlpha,
    DegenerateReference,
    FormatError,
    IllConditioned,
    InvalidInput,
    NumericalFailure,
    SubdoaError,
)
from .evaluate import BenchmarkConfig, run_benchmark
from .pipeline import PipelineParams, run_condition
from .prototypes import DirectionGrid, generate_freefield_set, save_protoset
from .sim import ScenarioConfig, load_scene, simulate_scene, write_scene

CONFIG_ERRORS = (InvalidInput, FormatError, OSError, KeyError, ValueError)
NUMERIC_ERRORS = (NumericalFailure, IllConditioned, DegenerateReference,
                  DegenerateAlpha)

# short condition names used on the command line
CONDITION_NAMES = {"hh": "h_h", "heh": "he_h", "hehe": "he_he"}


def _cmd_simulate(args) -> int:
    cfg = ScenarioConfig.from_json(args.config)
    mixture, truth = simulate_scene(cfg)
    write_scene(args.out, cfg, mixture, truth)
    print(f"wrote scene to {args.out}: {mixture.shape[0]} channels, "
          f"{mixture.shape[1]} samples at {cfg.sample_rate} Hz")
    return 0


def _cmd_run(args) -> int:
    cfg, mixture, truth = load_scene(args.scene)
    condition = CONDITION_NAMES[args.condition]
    proto = generate_freefield_set(
        truth.mic_positions[:4], DirectionGrid.uniform(args.grid_step),
        512 // 2 + 1, cfg.sample_rate, scope="ha",
        source_distance=cfg.speaker_distance)
    params = PipelineParams(n_speakers=truth.n_speakers,
                            sample_rate=cfg.sample_rate)
    ests = run_condition(mixture, proto, args.method, condition, params=params,
                         truth=None)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["frame"] + [f"doa_{j}" for j in range(truth.n_speakers)])
        for est in ests:
            w.writerow([est.frame_index]
                       + [f"{a:.1f}" if not np.isnan(a) else "" for a in est.angles])
    print(f"wrote {len(ests)} frame estimates to {args.out}")
    return 0


def _cmd_bench(args) -> int:
    if args.config is not None:
        with open(args.config) as fh:
            config = BenchmarkConfig.from_json(fh.read())
    else:
        config = BenchmarkConfig()
    if args.oracle_gating:
        config.oracle_gating = True
    if args.full_grid:
        config.full_grid = True
    report = run_benchmark(config, out_dir=args.out)
    for key, val in sorted(report.aggregates["overall"].items()):
        print(f"{key}: {val:.4f}")
    if report.failures:
        print(f"{len(report.failures)} scene(s) failed; see log")
    print(f"report written to {args.out}")
    return 0


def _cmd_protogen(args) -> int:
    with open(args.geometry) as fh:
        geo = json.load(fh)
    mics = np.asarray(geo["mic_positions"], dtype=float)
    ps = generate_freefield_set(
        mics, DirectionGrid.uniform(float(geo.get("grid_step_deg", 5.0))),
        int(geo.get("n_bins", 257)), int(geo.get("sample_rate", 16000)),
        scope=geo.get("scope", "ha"),
        source_distance=geo.get("source_distance"))
    save_protoset(ps, args.out)
    print(f"wrote {ps.n_directions}-direction prototype set to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="subdoa")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="render a scene directory")
    p.add_argument("--config", required=True, help="scenario config (JSON)")
    p.add_argument("--out", required=True, help="output scene directory")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("run", help="estimate DOAs on a rendered scene")
    p.add_argument("--scene", required=True, help="scene directory")
    p.add_argument("--method", required=True, choices=("music", "rtf"))
    p.add_argument("--condition", required=True, choices=tuple(CONDITION_NAMES))
    p.add_argument("--out", required=True, help="output CSV of frame estimates")
    p.add_argument("--grid-step", type=float, default=5.0,
                   help="candidate grid step in degrees")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("bench", help="run the benchmark sweep")
    p.add_argument("--config", help="benchmark config (JSON); defaults used if omitted")
    p.add_argument("--out", required=True, help="output report directory")
    p.add_argument("--oracle-gating", action="store_true")
    p.add_argument("--full-grid", action="store_true")
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("protogen", help="write a prototype-set file")
    p.add_argument("--geometry", required=True, help="array geometry (JSON)")
    p.add_argument("--out", required=True, help="output prototype-set path")
    p.set_defaults(func=_cmd_protogen)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NUMERIC_ERRORS as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 3
    except CONFIG_ERRORS as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return 2
    except SubdoaError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
