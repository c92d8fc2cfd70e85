"""Compiled vs pure-Python kernel timings on the bundled 23-coordinate model.

Run: python3 benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from exobench import kernels
from exobench._tree import build_tree
from exobench.model import default_model


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    tree = build_tree(default_model())
    rng = np.random.default_rng(0)
    n = tree.n
    q, qd, qdd = rng.normal(0, 0.3, (3, n))
    a0 = np.array([0.0, 9.81, 0.0])
    loads = np.zeros((n, 3))
    topo, inert = tree.topology, tree.inertials

    cases = {
        "fk": lambda m: m.fk(q, *topo),
        "sweep": lambda m: m.sweep(q, qd, qdd, a0, *topo),
        "rnea": lambda m: m.rnea(q, qd, qdd, a0, loads, loads, *topo, *inert),
        "mass_matrix": lambda m: m.mass_matrix(q, *topo, *inert),
    }
    backends = kernels.backends()
    if "compiled" not in backends:
        print("compiled backend not built; only the Python fallback is timed")

    print(f"{'kernel':<12}" + "".join(f"{b:>14}" for b in backends) + f"{'speed-up':>10}")
    for name, fn in cases.items():
        times = {}
        for bname, mod in backends.items():
            number = 20 if bname == "python" else 2000
            best = min(timeit.repeat(lambda: fn(mod), number=number, repeat=args.repeat))
            times[bname] = best / number
        row = f"{name:<12}" + "".join(f"{times[b] * 1e6:>11.1f} us" for b in backends)
        if "compiled" in times:
            row += f"{times['python'] / times['compiled']:>9.0f}x"
        print(row)

    if "compiled" in backends:
        py, c = backends["python"], backends["compiled"]
        diff = np.abs(py.rnea(q, qd, qdd, a0, loads, loads, *topo, *inert)
                      - c.rnea(q, qd, qdd, a0, loads, loads, *topo, *inert)).max()
        print(f"max |rnea_python - rnea_compiled| = {diff:.2e}")


if __name__ == "__main__":
    main()
