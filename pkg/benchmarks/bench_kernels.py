"""Compare the compiled kernels with the pure-Python fallback.

Usage::

    python3 benchmarks/bench_kernels.py [--scenario NAME] [--repeat N]

Prints per-kernel timings for both backends, then the wall time of a full
simulation with each backend (each run in a fresh interpreter so the
backend switch takes effect).
"""
import argparse
import os
import random
import subprocess
import sys
import timeit

from hybridfd import _pykernels

try:
    from hybridfd import _ckernels
except ImportError:
    _ckernels = None


def kernel_cases(rng):
    values = [rng.uniform(0.0, 3.0) for _ in range(10_000)]
    window = [rng.uniform(1.0, 10.0) for _ in range(64)]
    return {
        "suspicion_sum (near)": lambda k: k.suspicion_sum(107.3, 100.0, 5.0),
        "suspicion_sum (far)": lambda k: k.suspicion_sum(5000.0, 100.0, 5.0),
        "window_stats (64)": lambda k: k.window_stats(window),
        "threshold_runs (10k)": lambda k: k.threshold_runs(values, 1.0),
    }


def bench_kernels(repeat):
    cases = kernel_cases(random.Random(0))
    backends = [("python", _pykernels)] + ([("cython", _ckernels)] if _ckernels else [])
    print(f"{'kernel':24s} " + " ".join(f"{n:>12s}" for n, _ in backends) + "   speedup")
    for label, fn in cases.items():
        timer = timeit.Timer(lambda: fn(_pykernels))
        loops, _ = timer.autorange()
        row = []
        for _, mod in backends:
            best = min(timeit.repeat(lambda: fn(mod), number=loops, repeat=repeat))
            row.append(best / loops)
        speed = f"{row[0] / row[1]:8.1f}x" if len(row) == 2 else "       -"
        print(f"{label:24s} " + " ".join(f"{t * 1e6:10.2f}us" for t in row) + "  " + speed)


def bench_simulation(name, repeat):
    code = ("import time; from hybridfd import kernels, scenario, simnet;"
            f"sc = scenario.load({name!r}); t0 = time.perf_counter(); simnet.run(sc);"
            "print(kernels.BACKEND, time.perf_counter() - t0)")
    print(f"\nfull simulation of {name!r} (best of {repeat}):")
    for pure in (True, False):
        env = dict(os.environ)
        env.pop("HYBRIDFD_PURE_PYTHON", None)
        if pure:
            env["HYBRIDFD_PURE_PYTHON"] = "1"
        best, backend = float("inf"), "?"
        for _ in range(repeat):
            out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True,
                                 text=True, check=True).stdout.split()
            backend, best = out[0], min(best, float(out[1]))
        print(f"  {backend:8s} {best:8.3f}s")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scenario", default="scaling_50")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if _ckernels is None:
        print("compiled extension not built; timing the fallback only")
    bench_kernels(args.repeat)
    bench_simulation(args.scenario, args.repeat)


if __name__ == "__main__":
    main()
