"""Time the compiled routing kernels against the pure-Python reference.

Both backends implement the identical contract (same float semantics), so
every timed case is also an agreement check: mismatching outputs abort the
run. Usage:

    python3 benchmarks/bench_kernels.py [--sizes 50 200 1000] [--repeats 20]
"""

import argparse
import time

import numpy as np

from nds.core import Solution, Variant
from nds.instances import GeneratorSpec, generate
from nds.kernels import BACKEND, reference
from nds.reconstruction import initial_solution, pack_solution, rebuild

try:
    from nds.kernels import _speedups
except ImportError:
    _speedups = None


def _bench(fn, args, repeats):
    best = float("inf")
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def _agree(a, b):
    if isinstance(a, tuple):
        return all(_agree(x, y) for x, y in zip(a, b))
    if isinstance(a, np.ndarray):
        return np.array_equal(a, b)
    return abs(float(a) - float(b)) <= 1e-12


def run(sizes, repeats, m):
    rows = []
    for n in sizes:
        inst = generate(GeneratorSpec(variant=Variant.CVRP, n=n, seed=n))
        rng = np.random.default_rng(n)
        # densify once so routes look like mid-search solutions rather
        # than the singleton start
        sol = rebuild(inst, initial_solution(inst),
                      list(rng.permutation(np.arange(1, n + 1))))
        nodes, starts, unvisited = pack_solution(sol)
        p = inst.packed
        base = (p.variant_code, p.xs, p.ys, p.demand, p.capacity,
                p.tw_open, p.tw_close, p.service, p.prize)
        removal = rng.choice(np.arange(1, n + 1), size=min(m, n),
                             replace=False).astype(np.int64)
        lone = int(removal[0])
        held_out = Solution([[c for c in r if c != lone] for r in sol.routes
                             if [c for c in r if c != lone]], {lone})
        pn, ps, pu = pack_solution(held_out)

        cases = [
            ("solution_cost", "solution_cost",
             (p.variant_code, p.xs, p.ys, p.prize, nodes, starts)),
            ("best_insertion", "best_insertion",
             (*base, pn, ps, pu, lone)),
            ("greedy_reconstruct", "greedy_reconstruct",
             (*base, nodes, starts, unvisited, removal,
              rng.permutation(removal))),
        ]
        for label, attr, args in cases:
            t_pure, out_pure = _bench(getattr(reference, attr), args, repeats)
            if _speedups is None:
                rows.append((label, n, t_pure, None))
                continue
            t_fast, out_fast = _bench(getattr(_speedups, attr), args, repeats)
            if not _agree(out_pure, out_fast):
                raise SystemExit(f"backend disagreement in {label} at n={n}")
            rows.append((label, n, t_pure, t_fast))
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[50, 200, 1000])
    ap.add_argument("--repeats", type=int, default=20)
    ap.add_argument("--m", type=int, default=15,
                    help="removal size for the reconstruct case")
    args = ap.parse_args(argv)

    print(f"active backend: {BACKEND}"
          + ("" if _speedups else " (compiled extension not built)"))
    rows = run(args.sizes, args.repeats, args.m)
    print(f"{'kernel':<20} {'n':>5} {'pure ms':>10} {'compiled ms':>12} {'speedup':>8}")
    for label, n, t_pure, t_fast in rows:
        if t_fast is None:
            print(f"{label:<20} {n:>5} {t_pure * 1e3:>10.3f} {'-':>12} {'-':>8}")
        else:
            print(f"{label:<20} {n:>5} {t_pure * 1e3:>10.3f} "
                  f"{t_fast * 1e3:>12.3f} {t_pure / t_fast:>7.1f}x")


if __name__ == "__main__":
    main()
