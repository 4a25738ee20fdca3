#!/usr/bin/env python3
"""Measure forest recall and timing against the exact scan while sweeping tree count.

Usage:
    python scripts/ann_recall_experiment.py [--n 5000] [--dim 64] [--queries 300]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from difflens.knn import ExactIndex, RpForestIndex, recall_eval


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n", type=int, default=5000)
    parser.add_argument("--dim", type=int, default=64)
    parser.add_argument("--clusters", type=int, default=10)
    parser.add_argument("--queries", type=int, default=300)
    parser.add_argument("--k", type=int, default=10)
    parser.add_argument("--leaf-size", type=int, default=32)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    centers = rng.standard_normal((args.clusters, args.dim)) * 5.0
    data = (
        centers[rng.integers(0, args.clusters, args.n)] + rng.standard_normal((args.n, args.dim))
    ).astype(np.float32)
    queries = (
        centers[rng.integers(0, args.clusters, args.queries)]
        + rng.standard_normal((args.queries, args.dim))
    ).astype(np.float32)

    exact = ExactIndex(data, "input")
    t0 = time.monotonic()
    exact.query_batch(queries, args.k)
    exact_qps = args.queries / (time.monotonic() - t0)
    print(f"exact scan: {exact_qps:8.0f} queries/s")
    print(f"{'trees':>6} {'build s':>8} {'queries/s':>10} {'recall@' + str(args.k):>10}")
    for trees in (1, 2, 4, 8, 16, 32):
        t0 = time.monotonic()
        forest = RpForestIndex(data, "input", trees=trees, leaf_size=args.leaf_size, seed=args.seed)
        build = time.monotonic() - t0
        t0 = time.monotonic()
        recall = recall_eval(exact, forest, queries, args.k)
        qps = args.queries / (time.monotonic() - t0)
        print(f"{trees:>6} {build:8.2f} {qps:10.0f} {recall:10.3f}")


if __name__ == "__main__":
    main()
