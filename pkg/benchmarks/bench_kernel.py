"""Compare the compiled and pure-Python simulation kernels.

    python3 benchmarks/bench_kernel.py [--repeat 3] [--no-fast]

Each case runs the same ring through both kernels, checks that the results
agree, and reports the best wall time of ``--repeat`` runs.
"""

from __future__ import annotations

import argparse
import time

from sgdma_sim import _kernel_py
from sgdma_sim.engine import EngineConfig, kernel_params
from sgdma_sim.memmodel import DdrConfig

try:
    from sgdma_sim import _kernel_c
except ImportError:  # extension not built
    _kernel_c = None

# (bytes_per_bd, n_bds, n_cycles)
CASES = [
    (32, 4, 1),
    (32, 1024, 2),
    (8192, 1024, 2),
    (32, 8192, 8192),
    (8192, 8192, 8192),
    (1000, 97, 5),  # non power of two: no fast-forward until a period shows up
]


def best_of(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--no-fast", action="store_true", help="disable fast-forward (small cases only)")
    args = ap.parse_args(argv)

    ddr = DdrConfig(refresh_phase_ns=1234.5)
    params = kernel_params(EngineConfig(), ddr.timing(), ddr.contention_ps(40))
    fast = not args.no_fast
    print(f"{'bytes':>6} {'n_bds':>6} {'cycles':>6} {'python s':>10} {'compiled s':>11} {'speedup':>8}")
    for b, n, c in CASES:
        if not fast and n * c > 1 << 16:
            continue
        lengths = [b] * n
        py = lambda: _kernel_py.simulate(params, lengths, c, fast=fast)  # noqa: E731
        t_py = best_of(py, args.repeat)
        if _kernel_c is None:
            print(f"{b:6d} {n:6d} {c:6d} {t_py:10.4f} {'n/a':>11} {'':>8}")
            continue
        cc = lambda: _kernel_c.simulate(params, lengths, c, fast=fast)  # noqa: E731
        if py() != cc():
            raise SystemExit(f"kernels disagree at {(b, n, c)}")
        t_c = best_of(cc, args.repeat)
        print(f"{b:6d} {n:6d} {c:6d} {t_py:10.4f} {t_c:11.5f} {t_py / t_c:7.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
