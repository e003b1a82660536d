"""Benchmark the CKY chart kernels: numba JIT vs pure-numpy fallback.

Usage: python benchmarks/bench_cky.py [--repeats N]

The two paths are also checked for bit-identical output at every size.
Setting PROSOPARSE_NUMBA=0 before import would hide the JIT path, so this
script imports both kernels explicitly.
"""

import argparse
import time

import numpy as np

from prosoparse._kernels import cky_fill_numba, cky_fill_numpy
from prosoparse.chart import SpanScores, cky_decode
from prosoparse.treebank import LabelVocab

SENTENCE_LENGTHS = (10, 20, 40, 80, 160)
N_LABELS = 64


def time_fn(fn, arg, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(arg)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()

    if cky_fill_numba is None:
        print("numba unavailable; only the numpy path can run")
        return

    rng = np.random.default_rng(0)
    print(f"{'T':>5} {'numpy (ms)':>12} {'numba (ms)':>12} {'speedup':>9}")
    for T in SENTENCE_LENGTHS:
        label_best = rng.standard_normal((T + 1, T + 1))
        nb = cky_fill_numba(label_best)  # includes JIT compile on first call
        npy = cky_fill_numpy(label_best)
        assert np.array_equal(nb[0], npy[0]) and np.array_equal(nb[1], npy[1])
        t_np = time_fn(cky_fill_numpy, label_best, args.repeats)
        t_nb = time_fn(cky_fill_numba, label_best, args.repeats)
        print(f"{T:>5} {t_np * 1e3:>12.3f} {t_nb * 1e3:>12.3f} {t_np / t_nb:>8.1f}x")

    # end-to-end decode at a conversational length, label argmax included
    T = 60
    vocab = LabelVocab([f"L{i}" for i in range(1, N_LABELS)])
    dense = rng.standard_normal((T + 1, T + 1, N_LABELS))
    dense[:, :, 0] = 0.0
    leaves = [(f"w{i}", "NN") for i in range(T)]
    scores = SpanScores(dense, vocab, T)
    t = time_fn(lambda s: cky_decode(s, leaves), scores, args.repeats)
    print(f"\nfull decode at T={T}, |labels|={N_LABELS}: {t * 1e3:.2f} ms per sentence")


if __name__ == "__main__":
    main()
