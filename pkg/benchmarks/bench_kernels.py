"""Compare the compiled and numpy sampling kernels.

    python3 benchmarks/bench_kernels.py [--quick] [--repeat N]

Both backends run the same batch (same seeds, same family) and must agree on
every branch index before a timing is reported.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from collapselab import kernels
from collapselab.families import gaussian_localization, random_family, site_dephasing
from collapselab.linops import random_state

WORKLOADS = [
    # name, family factory, n_trajectories, n_steps
    ("2-qubit site dephasing", lambda rng: site_dephasing(2, 0.25), 100_000, 10),
    ("GRW ring d=16", lambda rng: gaussian_localization(16, 1.5, 0.3), 20_000, 20),
    ("random d=8, 4 branches", lambda rng: random_family(8, 4, rng), 20_000, 20),
]


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--quick", action="store_true", help="shrink workloads 20x")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    found = kernels.backends()
    names = sorted(found)
    print(f"backends: {', '.join(names)} (selected: {kernels.BACKEND})")
    header = f"{'workload':<26}{'traj x steps':>16}" + "".join(f"{n + ' [s]':>14}" for n in names)
    if "cython" in found:
        header += f"{'speedup':>10}"
    print(header)
    rng = np.random.default_rng(0)
    rows = []
    for name, make, n_traj, n_steps in WORKLOADS:
        if args.quick:
            n_traj //= 20
        f = make(rng)
        psi0 = random_state(f.dim, rng).amplitudes
        seeds = kernels.trajectory_seeds(1, np.arange(n_traj, dtype=np.uint64))
        timings, outs = {}, {}
        for b in names:
            timings[b], outs[b] = best_of(lambda: found[b].run_batch(f.effective, psi0, seeds, n_steps, 1e-14),
                                          args.repeat)
        ref = outs[names[0]][1]
        for b in names[1:]:
            if not np.array_equal(ref, outs[b][1]):
                raise SystemExit(f"backend {b} disagrees with {names[0]} on {name}")
        line = f"{name:<26}{f'{n_traj} x {n_steps}':>16}" + "".join(f"{timings[b]:>14.4f}" for b in names)
        if "cython" in found:
            line += f"{timings['python'] / timings['cython']:>9.1f}x"
        print(line)
        rows.append((name, timings))
    return rows


if __name__ == "__main__":
    main()
