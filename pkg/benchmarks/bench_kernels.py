"""Time the search loop under the numba and numpy backends.

    python benchmarks/bench_kernels.py [--steps 1000] [--repeat 3]

Each size runs honest two-term bidders through a full search and reports
the best wall time per backend plus the largest amplitude difference
between them.
"""
import argparse
import time

import numpy as np

from qauction import AuctionConfig, BidSuperposition, Honest, NULL_BID, SearchSchedule, set_backend
from qauction.experiments import run_profile

SIZES = [(2, 2), (3, 2), (2, 4), (4, 3), (3, 5), (4, 4)]


def profile(n, b):
    config = AuctionConfig.single_item(n, b)
    lang = config.language
    top = 2 ** b - 1
    strategies = [
        Honest(BidSuperposition.uniform([NULL_BID, lang.bid(1 + (j * 5) % top)], (j,))) for j in range(n)
    ]
    return config, strategies


def timed(backend, config, strategies, schedule, repeat):
    set_backend(backend)
    run_profile(strategies, schedule.with_steps(2), config)  # compile / warm caches
    best, psi = float("inf"), None
    for _ in range(repeat):
        t0 = time.perf_counter()
        psi = run_profile(strategies, schedule, config).final_state.amplitudes
        best = min(best, time.perf_counter() - t0)
    return best, psi


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--steps", type=int, default=1000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    schedule = SearchSchedule(args.steps)

    print(f"{'n':>2} {'b':>2} {'qubits':>6} {'numba s':>9} {'numpy s':>9} {'speedup':>8} {'max |diff|':>11}")
    for n, b in SIZES:
        config, strategies = profile(n, b)
        t_nb, a_nb = timed("numba", config, strategies, schedule, args.repeat)
        t_np, a_np = timed("numpy", config, strategies, schedule, args.repeat)
        diff = float(np.max(np.abs(a_nb - a_np)))
        print(f"{n:>2} {b:>2} {n * b:>6} {t_nb:>9.4f} {t_np:>9.4f} {t_np / t_nb:>8.2f} {diff:>11.2e}")
    set_backend("numba")


if __name__ == "__main__":
    main()
