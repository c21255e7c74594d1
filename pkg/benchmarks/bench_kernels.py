"""Benchmark the compiled kernel extension against the numpy fallback.

Times the hot kernels on representative shapes and, optionally, a full
simulation run under each backend. Run from the repository root:

    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --repeats 200 --end-to-end
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from taskfed.kernels import _py

try:
    from taskfed.kernels import _core
except ImportError:
    _core = None


def time_call(fn, *args, repeats: int) -> float:
    """Best-of-3 mean microseconds per call."""
    best = float("inf")
    for _ in range(3):
        start = time.perf_counter()
        for _ in range(repeats):
            fn(*args)
        best = min(best, (time.perf_counter() - start) / repeats)
    return best * 1e6


def bench_kernels(repeats: int) -> None:
    rng = np.random.default_rng(0)
    cases = []
    for k, d in ((4, 64), (8, 256), (8, 4096)):
        rows = np.ascontiguousarray(rng.standard_normal((k, d)))
        weights = np.ascontiguousarray(rng.uniform(0, 1, k))
        cases.append((f"mean_rows {k}x{d}", "mean_rows", (rows,)))
        cases.append((f"weighted_rows {k}x{d}", "weighted_rows", (rows, weights)))
    x = np.ascontiguousarray(rng.standard_normal(4096))
    y = np.ascontiguousarray(rng.standard_normal(4096))
    cases.append(("axpy 4096", "axpy", (0.5, x, y)))
    cases.append(("dot 4096", "dot", (x, y)))
    v8 = np.ascontiguousarray(rng.standard_normal(8))
    cases.append(("project_simplex 8", "project_simplex", (v8,)))
    for n in (4, 8):
        rows = rng.standard_normal((n, 64))
        gram = np.ascontiguousarray(rows @ rows.T)
        lin = np.ascontiguousarray(rows @ rows.mean(axis=0))
        cases.append(
            (f"dual_pgd n={n} (200 iters)", "dual_pgd", (gram, lin, 0.4, 200, 0.01, 0.0))
        )

    header = f"{'kernel':<28} {'numpy us':>10} {'compiled us':>12} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for label, name, args in cases:
        t_py = time_call(getattr(_py, name), *args, repeats=repeats)
        if _core is None:
            print(f"{label:<28} {t_py:>10.2f} {'n/a':>12} {'n/a':>8}")
            continue
        t_c = time_call(getattr(_core, name), *args, repeats=repeats)
        print(f"{label:<28} {t_py:>10.2f} {t_c:>12.2f} {t_py / t_c:>7.2f}x")


def bench_end_to_end() -> None:
    """Wall-time of the 200-round convergence run under each backend."""
    script = (
        "import time, taskfed.harness as h; "
        "cfg = h.load_config('configs/convergence.yaml'); "
        "t = time.perf_counter(); h.run_experiment(cfg, write=False); "
        "print(f'{time.perf_counter() - t:.3f}')"
    )
    print()
    print("end-to-end: 200-round convergence run")
    for backend in ("py", "c"):
        env = dict(os.environ, TASKFED_KERNELS=backend)
        proc = subprocess.run(
            [sys.executable, "-c", script], capture_output=True, text=True, env=env
        )
        if proc.returncode != 0:
            print(f"  {backend}: failed ({proc.stderr.strip().splitlines()[-1]})")
            continue
        print(f"  {backend}: {proc.stdout.strip()}s")


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=2000, help="calls per timing loop")
    parser.add_argument(
        "--end-to-end", action="store_true", help="also time a full simulation per backend"
    )
    args = parser.parse_args()
    if _core is None:
        print("note: compiled extension not built; showing numpy timings only", file=sys.stderr)
    bench_kernels(args.repeats)
    if args.end_to_end:
        bench_end_to_end()
    return 0


if __name__ == "__main__":
    sys.exit(main())
