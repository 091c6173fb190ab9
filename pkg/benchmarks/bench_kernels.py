"""Time the numba kernels against their numpy counterparts.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 3] [--quick]

Each row reports the best wall time of both backends and the largest
difference between their results (the two backends must agree; the
ring rows report a relative difference).
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from permom import _accel, _kernels
from permom.bound_solver import _start_weights, degeneracy_tuples


def _best(fn, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def _both(fn, repeat):
    res = {}
    for name in ("numba", "numpy"):
        _accel.set_backend(name)
        fn()  # warm-up (JIT compile on first numba call)
        res[name] = _best(fn, repeat)
    _accel.set_backend("numba")
    return res


def cases(quick: bool):
    rng = np.random.default_rng(7)

    # bound solver: all degeneracy tuples for a random spectrum
    for n, L in ((2, 16), (3, 16)) if quick else ((2, 16), (3, 16), (4, 16)):
        lam = np.sort(rng.random(L))[::-1]
        lam /= np.sqrt(np.sum(lam**2))
        M = np.array([np.sum(lam ** (2 * k)) for k in range(1, n + 1)])
        qs, rs = degeneracy_tuples(n, L, 1, True)
        W = _start_weights(n, 32)

        def run(qs=qs, rs=rs, M=M, W=W):
            vals, _, _ = _kernels.solve_tuples(qs, rs, M, W)
            return np.min(vals)

        yield f"solve_tuples n={n} L={L} tuples={len(rs)}", run

    # randomized-measurement weight matrices
    for N_M, nbits in ((50, 3), (400, 5)):
        sx = rng.integers(0, 2**nbits, N_M)
        sy = rng.integers(0, 2**nbits, N_M)
        yield f"rm_weights local N_M={N_M} bits={nbits}", lambda sx=sx, sy=sy, b=nbits: _kernels.rm_weights(sx, sy, True, b)

    # distinct-index ring sums
    for M in (200, 800) if quick else (200, 800, 2000):
        mats = [rng.normal(size=(M, M)) for _ in range(2)]
        yield f"distinct_ring P=2 M={M}", lambda mats=mats: _kernels.distinct_ring(mats)


def ring_rows(quick: bool, repeat: int):
    # for 4-cycles the kernels differ in algorithm, not just backend:
    # numba brute force (M^4) against numpy Moebius einsums (M^3)
    rng = np.random.default_rng(11)
    for M in (20, 40, 80) if quick else (20, 40, 80, 120):
        mats = [rng.normal(size=(M, M)) for _ in range(4)]
        _kernels.distinct_ring_bruteforce(mats)
        tn, on = _best(lambda: _kernels.distinct_ring_bruteforce(mats), repeat)
        tp, op = _best(lambda: _kernels._ring_np(mats), repeat)
        yield f"ring4 brute(numba) vs moebius(numpy) M={M}", tn, tp, abs(on - op) / max(abs(op), 1.0)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--quick", action="store_true", help="smaller problem sizes")
    args = p.parse_args(argv)
    if not _accel.HAS_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    print(f"{'kernel':45s} {'numba [s]':>10s} {'numpy [s]':>10s} {'speedup':>8s} {'max |diff|':>11s}")
    for label, fn in cases(args.quick):
        r = _both(fn, args.repeat)
        (tn, on), (tp, op) = r["numba"], r["numpy"]
        diff = float(np.max(np.abs(np.asarray(on) - np.asarray(op))))
        print(f"{label:45s} {tn:10.4f} {tp:10.4f} {tp / tn:8.1f} {diff:11.2e}")
    for label, tn, tp, rel in ring_rows(args.quick, args.repeat):
        print(f"{label:45s} {tn:10.4f} {tp:10.4f} {tp / tn:8.1f} {rel:11.2e}")


if __name__ == "__main__":
    main()
