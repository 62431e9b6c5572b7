"""Time each batched kernel under the numpy and numba backends.

Sizes default to one frame of the 16 kHz pipeline: 257 bins, 5 channels,
72 candidate directions.  Numba timings exclude compilation (one warmup
call per kernel).  Run as ``python3 benchmarks/compare_backends.py``.
"""

import argparse
import time

import numpy as np

from subdoa import _kernels_numpy

try:
    from subdoa import _kernels_numba
except ImportError:
    _kernels_numba = None


def make_inputs(rng, bins, chans, dirs):
    def psd():
        x = rng.standard_normal((bins, chans, chans)) + 1j * rng.standard_normal(
            (bins, chans, chans))
        a = x @ np.conj(np.transpose(x, (0, 2, 1))) / chans
        a[:, np.arange(chans), np.arange(chans)] += 1e-3
        return a

    def cplx(*shape):
        return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)

    phi = psd()
    low, _, _ = _kernels_numpy.cholesky(psd())
    principal = cplx(bins, chans)
    principal /= np.linalg.norm(principal, axis=1, keepdims=True)
    cand = cplx(bins, dirs, chans)
    m = chans - 1
    img = rng.uniform(-10.0, 10.0, size=(2000, 3))
    amps = rng.uniform(0.1, 1.0, size=2000)
    return {
        "jacobi_evd": (psd(),),
        "cholesky": (psd(),),
        "solve_lower": (low, cplx(bins, chans, dirs)),
        "whiten": (phi, low),
        "completion_r": (cplx(bins, m, m), cplx(bins, m)),
        "complete_elements": (cplx(bins, dirs, m), cplx(bins, m)),
        "music": (principal, cand),
        "rtf_match": (cplx(bins, chans), cand),
        "rtf_from_whitened": (low, cand, 0),
        "rir_accumulate": (8192, img, amps, np.array([0.1, -0.2, 0.05]),
                           16000.0, 343.0),
    }


def median_time(fn, args, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--bins", type=int, default=257)
    ap.add_argument("--chans", type=int, default=5)
    ap.add_argument("--dirs", type=int, default=72)
    ap.add_argument("--repeats", type=int, default=7)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    inputs = make_inputs(rng, args.bins, args.chans, args.dirs)

    print(f"bins={args.bins} chans={args.chans} dirs={args.dirs} "
          f"repeats={args.repeats} (median, ms)")
    header = f"{'kernel':<20}{'numpy':>10}{'numba':>10}{'speedup':>9}"
    print(header)
    print("-" * len(header))
    for name, kargs in inputs.items():
        t_np = median_time(getattr(_kernels_numpy, name), kargs, args.repeats)
        if _kernels_numba is None:
            print(f"{name:<20}{t_np * 1e3:>10.3f}{'n/a':>10}{'':>9}")
            continue
        fn = getattr(_kernels_numba, name)
        fn(*kargs)  # compile
        t_nb = median_time(fn, kargs, args.repeats)
        print(f"{name:<20}{t_np * 1e3:>10.3f}{t_nb * 1e3:>10.3f}"
              f"{t_np / t_nb:>8.1f}x")
    if _kernels_numba is None:
        print("numba unavailable; numpy timings only")


if __name__ == "__main__":
    main()
