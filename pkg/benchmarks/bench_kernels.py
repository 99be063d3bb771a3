"""Compare the compiled and pure-Python kernels.

    python benchmarks/bench_kernels.py [--repeat 5] [--instances 200]

Times ``min_norm_point`` on random hulls, ``flow`` on random systems and a
perturbed two-queue run with 10^4 Bernoulli jumps, and checks that both
backends return the same numbers.
"""

import argparse
import time

import numpy as np

from fpcs_lab import _pykernels
from fpcs_lab.random_systems import fig1_potential, generator, random_potential

try:
    from fpcs_lab import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def hull_workload(k, instances):
    rng = generator(1)
    hulls = [rng.normal(size=(int(rng.integers(2, 9)), int(rng.integers(1, 5))))
             for _ in range(instances)]
    return lambda: [k.min_norm_point(P) for P in hulls]


def flow_workload(k, instances):
    cases = []
    for s in range(instances):
        rng = generator(2, s)
        phi = random_potential(rng)
        cases.append((phi, rng.uniform(-3, 3, size=phi.dim)))
    return lambda: [k.flow(p.drifts, p.offsets, p.field, x0, 0.0, 10.0) for p, x0 in cases]


def perturbed_workload(k, jumps=10_000):
    phi = fig1_potential()
    rng = generator(3)
    inc = np.zeros((jumps, 2))
    inc[np.arange(jumps), rng.integers(0, 2, size=jumps)] = rng.choice([-1.0, 1.0], size=jumps)
    bounds = np.arange(1.0, jumps + 2.0)

    def run():
        return k.flow_jumps(phi.drifts, phi.offsets, phi.field, np.zeros(2), bounds, inc)
    return run


def check_agreement(instances):
    a, b = flow_workload(_pykernels, instances)(), flow_workload(_ckernels, instances)()
    worst = 0.0
    for (ta, xa, da, sa), (tb, xb, db, sb) in zip(a, b):
        if len(ta) != len(tb) or sa != sb:
            return float("inf")
        worst = max(worst, np.abs(ta - tb).max(), np.abs(xa - xb).max(), np.abs(da - db).max())
    return worst


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--instances", type=int, default=200)
    args = ap.parse_args()
    if _ckernels is None:
        print("compiled extension not available; build with `pip install -e .`")
        return
    rows = [
        ("min_norm_point", hull_workload),
        ("flow", flow_workload),
    ]
    print(f"{'workload':<24}{'python [s]':>12}{'cython [s]':>12}{'speed-up':>10}")
    for name, make in rows:
        tp = best_of(make(_pykernels, args.instances), args.repeat)
        tc = best_of(make(_ckernels, args.instances), args.repeat)
        print(f"{name:<24}{tp:>12.4f}{tc:>12.4f}{tp / tc:>10.1f}")
    tp = best_of(perturbed_workload(_pykernels), 1)
    tc = best_of(perturbed_workload(_ckernels), 1)
    print(f"{'perturbed (1e4 jumps)':<24}{tp:>12.4f}{tc:>12.4f}{tp / tc:>10.1f}")
    print(f"max backend difference on flow: {check_agreement(args.instances):.3g}")


if __name__ == "__main__":
    main()
