"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_backends.py [--repeat 3]

Each kernel runs on identical inputs under both backends; the table shows
the best wall time of ``--repeat`` runs and whether outputs agree.
"""
import argparse
import time

import numpy as np

from seedpure import _pykernels

try:
    from seedpure import _core
except ImportError:
    _core = None


def _cases(rng):
    x = rng.standard_normal((1, 64, 38, 85)).astype(np.float32)
    w = rng.standard_normal((64, 64, 3, 3)) * 0.05
    b = rng.standard_normal(64)
    yield "conv2d 64->64 3x3 @38x85", lambda k: k.conv2d(x, w, b, 1, 1)

    p = rng.standard_normal((2, 256, 18, 42)).astype(np.float32)
    yield "maxpool2d 2x2 s2 @256x18x42", lambda k: k.maxpool2d(p, 2, 2, 0)

    X = rng.standard_normal((400, 2000)).astype(np.float32)
    y = (rng.random(400) < 0.5).astype(np.uint8)
    rows = np.arange(400, dtype=np.intp)
    cand = np.arange(2000, dtype=np.intp)
    yield "split_node best 400x2000", lambda k: k.split_node(X, y, rows, cand, None, 2000)
    u = rng.random(2000)
    yield "split_node random 400x2000", lambda k: k.split_node(X, y, rows, cand, u, 2000)

    Q = rng.standard_normal((100, 5000)).astype(np.float32)
    T = rng.standard_normal((300, 5000)).astype(np.float32)
    yield "sq_distances 100x300x5000", lambda k: k.sq_distances(Q, T)

    Xs = rng.standard_normal((300, 5000)).astype(np.float32)
    ys = np.where(rng.random(300) < 0.5, 1.0, -1.0)
    qd = (Xs.astype(np.float64) ** 2).sum(axis=1) + 1.0
    order = rng.permutation(300).astype(np.intp)

    def svm(k):
        alpha = np.zeros(300)
        wv = np.zeros(5001)
        k.svm_epoch(Xs, ys, qd, alpha, wv, order, 1.0)
        return wv
    yield "svm_epoch 300x5000", svm


def _best(fn, kernels, repeat):
    best, out = float("inf"), None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(kernels)
        best = min(best, time.perf_counter() - t0)
    return best, out


def _agree(a, b) -> bool:
    if isinstance(a, tuple):
        return all(_agree(p, q) for p, q in zip(a, b))
    return np.allclose(np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64),
                       rtol=1e-6, atol=1e-6)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if _core is None:
        print("compiled extension not built; only the fallback can run")
    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':32s} {'python s':>10s} {'compiled s':>11s} {'speedup':>8s}  agree")
    for name, fn in _cases(rng):
        tp, op = _best(fn, _pykernels, args.repeat)
        if _core is None:
            print(f"{name:32s} {tp:10.4f} {'-':>11s} {'-':>8s}  -")
            continue
        tc, oc = _best(fn, _core, args.repeat)
        print(f"{name:32s} {tp:10.4f} {tc:11.4f} {tp / tc:7.1f}x  {_agree(op, oc)}")


if __name__ == "__main__":
    main()
