"""Time the compiled RK4 kernel against the numpy fallback.

Usage: python3 benchmarks/bench_backends.py [--repeat 5]
"""
import argparse
import json
import timeit

import numpy as np

from matspec import _ode_py

try:
    from matspec._ode import rk4_batch as compiled
except ImportError:
    compiled = None


def problem(m, K, B, seed=0):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((2 * K + 1, m, m))
    Q = (A + np.swapaxes(A, 1, 2)).astype(complex)
    lam = np.linspace(0.0, 400.0, B).astype(complex)
    return (np.ascontiguousarray(Q[::2]), np.ascontiguousarray(Q[1::2]), lam,
            np.eye(m, dtype=complex), np.zeros((m, m), complex), np.pi / K)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rows = []
    for m, K, B in [(1, 800, 1), (1, 800, 32), (2, 800, 8), (3, 1600, 8)]:
        a = problem(m, K, B)
        row = {"m": m, "steps": K, "batch": B}
        for name, fn in [("python", _ode_py.rk4_batch), ("compiled", compiled)]:
            if fn is None:
                continue
            t = min(timeit.repeat(lambda: fn(*a, variational=True), number=1, repeat=args.repeat))
            row[name + "_ms"] = round(1e3 * t, 3)
        if "compiled_ms" in row:
            row["speedup"] = round(row["python_ms"] / row["compiled_ms"], 1)
            x = compiled(*a, variational=True)
            y = _ode_py.rk4_batch(*a, variational=True)
            row["max_diff"] = float(max(np.max(np.abs(np.asarray(p) - np.asarray(q))) for p, q in zip(x, y) if p is not None))
        rows.append(row)
        print(json.dumps(row))


if __name__ == "__main__":
    main()
