"""Exact and approximate nearest-neighbor search over one probe space's training matrix.

Exact mode is a full scan in float64 with ties broken by lower row index.
Approximate mode is a forest of random-projection trees: each internal node
splits its rows by the median projection onto a random Gaussian direction.
Queries run a best-first backtracking search across all trees, scoring every
subtree by the minimum signed margin along its path (positive when the query
is inside the region, negative by the distance to the violated boundary) and
always expanding the highest-scoring subtree. The search visits leaves until
``max(k * trees, 4 * k)`` leaves have been scanned (and at least k distinct
candidates collected), then ranks the candidates by exact distance.

Both modes report exact Euclidean distances for the rows they return.
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import IndexError_

INDEX_CACHE_VERSION = 1


@dataclass(frozen=True)
class NeighborSet:
    """An ordered k-neighborhood of one query in one probe space."""

    query_id: str
    layer: str
    k: int
    rows: np.ndarray  # (k,) train row ids
    distances: np.ndarray  # (k,) nondecreasing Euclidean distances
    labels: np.ndarray  # (k,) train ground-truth labels


def _as_f64(matrix: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(matrix, dtype=np.float64)


def _check_query(index: "ExactIndex | RpForestIndex", vector: np.ndarray, k: int) -> np.ndarray:
    v = np.asarray(vector, dtype=np.float64).reshape(-1)
    if v.shape[0] != index.dim:
        raise IndexError_(f"query has {v.shape[0]} dims, index {index.layer!r} expects {index.dim}")
    if not 1 <= k <= index.n:
        raise IndexError_(f"k={k} outside [1, {index.n}]")
    return v


def _rank(data: np.ndarray, rows: np.ndarray, q: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Top-k of ``rows`` by exact distance to q; stable sort keeps row ids as tie-break."""
    diff = data[rows] - q
    d2 = (diff * diff).sum(axis=1)
    order = np.argsort(d2, kind="stable")[:k]
    picked = rows[order]
    return picked, np.sqrt(d2[order])


class ExactIndex:
    """Brute-force index: the oracle-grade exact mode."""

    mode = "exact"

    def __init__(self, data: np.ndarray, layer: str):
        if data.ndim != 2 or data.shape[0] == 0:
            raise IndexError_(f"cannot index empty training split for {layer!r}")
        self._data = _as_f64(data)
        self._data.flags.writeable = False
        self.layer = layer
        self.n, self.dim = self._data.shape

    def query(self, vector: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
        q = _check_query(self, vector, k)
        return _rank(self._data, np.arange(self.n), q, k)

    def query_batch(self, matrix: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
        m = np.asarray(matrix, dtype=np.float64)
        rows = np.empty((m.shape[0], k), dtype=np.int64)
        dists = np.empty((m.shape[0], k), dtype=np.float64)
        for i in range(m.shape[0]):
            rows[i], dists[i] = self.query(m[i], k)
        return rows, dists


class RpForestIndex:
    """Random-projection tree forest with best-first backtracking queries."""

    mode = "approximate"

    def __init__(
        self,
        data: np.ndarray,
        layer: str,
        trees: int = 16,
        leaf_size: int = 32,
        seed: int = 0,
        _trees_data: list[dict] | None = None,
    ):
        if data.ndim != 2 or data.shape[0] == 0:
            raise IndexError_(f"cannot index empty training split for {layer!r}")
        if trees < 1 or leaf_size < 1:
            raise IndexError_("trees and leaf_size must be >= 1")
        self._data = _as_f64(data)
        self._data.flags.writeable = False
        self.layer = layer
        self.n, self.dim = self._data.shape
        self.n_trees = trees
        self.leaf_size = leaf_size
        self.seed = seed
        if _trees_data is not None:
            self._trees = _trees_data
        else:
            seqs = np.random.SeedSequence(seed).spawn(trees)
            self._trees = [self._build_tree(np.random.default_rng(s)) for s in seqs]

    # -- construction ------------------------------------------------------

    def _build_tree(self, rng: np.random.Generator) -> dict:
        normals: list[np.ndarray] = []
        offsets: list[float] = []
        left: list[int] = []
        right: list[int] = []
        leaf_start: list[int] = []
        leaf_end: list[int] = []
        leaf_rows: list[np.ndarray] = []
        cursor = 0

        def rec(rows: np.ndarray) -> int:
            nonlocal cursor
            node = len(offsets)
            normals.append(None)  # type: ignore[arg-type]
            offsets.append(0.0)
            left.append(-1)
            right.append(-1)
            leaf_start.append(-1)
            leaf_end.append(-1)
            if rows.shape[0] > self.leaf_size:
                direction = rng.standard_normal(self.dim)
                proj = self._data[rows] @ direction
                offset = float(np.median(proj))
                go_left = proj < offset
                if go_left.any() and not go_left.all():
                    normals[node] = direction
                    offsets[node] = offset
                    left[node] = rec(rows[go_left])
                    right[node] = rec(rows[~go_left])
                    return node
                # unsplittable (ties at the median): fall through to a leaf
            leaf_start[node] = cursor
            leaf_end[node] = cursor + rows.shape[0]
            leaf_rows.append(rows)
            cursor += rows.shape[0]
            return node

        rec(np.arange(self.n, dtype=np.int64))
        dim = self.dim
        normal_mat = np.stack([v if v is not None else np.zeros(dim) for v in normals])
        return {
            "normals": normal_mat,
            "offsets": np.asarray(offsets),
            "left": np.asarray(left, dtype=np.int64),
            "right": np.asarray(right, dtype=np.int64),
            "leaf_start": np.asarray(leaf_start, dtype=np.int64),
            "leaf_end": np.asarray(leaf_end, dtype=np.int64),
            "indices": np.concatenate(leaf_rows) if leaf_rows else np.empty(0, dtype=np.int64),
        }

    # -- search ------------------------------------------------------------

    def _candidates(self, q: np.ndarray, k: int) -> np.ndarray:
        budget = max(k * self.n_trees, 4 * k)
        mask = np.zeros(self.n, dtype=bool)
        distinct = 0
        leaves = 0
        heap: list[tuple[float, int, int, int]] = []
        seq = 0
        for t in range(self.n_trees):
            heap.append((-np.inf, seq, t, 0))
            seq += 1
        heapq.heapify(heap)
        while heap:
            if leaves >= budget and distinct >= k:
                break
            neg_prio, _, t, node = heapq.heappop(heap)
            prio = -neg_prio
            tree = self._trees[t]
            if tree["left"][node] < 0:
                rows = tree["indices"][tree["leaf_start"][node] : tree["leaf_end"][node]]
                fresh = rows[~mask[rows]]
                mask[fresh] = True
                distinct += fresh.shape[0]
                leaves += 1
                continue
            margin = float(q @ tree["normals"][node] - tree["offsets"][node])
            near, far = (
                (tree["left"][node], tree["right"][node])
                if margin < 0
                else (tree["right"][node], tree["left"][node])
            )
            heapq.heappush(heap, (-min(prio, abs(margin)), seq, t, int(near)))
            seq += 1
            heapq.heappush(heap, (-min(prio, -abs(margin)), seq, t, int(far)))
            seq += 1
        return np.flatnonzero(mask)

    def query(self, vector: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
        q = _check_query(self, vector, k)
        return _rank(self._data, self._candidates(q, k), q, k)

    def query_batch(self, matrix: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
        m = np.asarray(matrix, dtype=np.float64)
        rows = np.empty((m.shape[0], k), dtype=np.int64)
        dists = np.empty((m.shape[0], k), dtype=np.float64)
        for i in range(m.shape[0]):
            rows[i], dists[i] = self.query(m[i], k)
        return rows, dists

    # -- cache -------------------------------------------------------------

    def save(self, path: str | Path, fingerprint: int) -> None:
        meta = {
            "version": INDEX_CACHE_VERSION,
            "layer": self.layer,
            "trees": self.n_trees,
            "leaf_size": self.leaf_size,
            "seed": self.seed,
            "fingerprint": fingerprint,
            "n": self.n,
            "dim": self.dim,
        }
        arrays = {"data": self._data}
        for i, tree in enumerate(self._trees):
            for key, arr in tree.items():
                arrays[f"t{i}_{key}"] = arr
        np.savez(path, meta=json.dumps(meta, sort_keys=True), **arrays)

    @classmethod
    def load(
        cls,
        path: str | Path,
        fingerprint: int,
        layer: str,
        trees: int,
        leaf_size: int,
        seed: int,
    ) -> "RpForestIndex | None":
        """Load a cached forest; None when missing, stale or built with other params."""
        path = Path(path)
        if not path.is_file():
            return None
        try:
            with np.load(path, allow_pickle=False) as archive:
                meta = json.loads(str(archive["meta"]))
                expected = {
                    "version": INDEX_CACHE_VERSION,
                    "layer": layer,
                    "trees": trees,
                    "leaf_size": leaf_size,
                    "seed": seed,
                    "fingerprint": fingerprint,
                }
                if {k: meta.get(k) for k in expected} != expected:
                    return None
                data = archive["data"]
                trees_data = [
                    {
                        key: archive[f"t{i}_{key}"]
                        for key in ("normals", "offsets", "left", "right", "leaf_start", "leaf_end", "indices")
                    }
                    for i in range(trees)
                ]
        except (OSError, ValueError, KeyError):
            return None
        return cls(data, layer, trees=trees, leaf_size=leaf_size, seed=seed, _trees_data=trees_data)


ProbeIndex = ExactIndex | RpForestIndex


def build_index(
    data: np.ndarray,
    layer: str,
    mode: str = "approximate",
    trees: int = 16,
    leaf_size: int = 32,
    seed: int = 0,
) -> ProbeIndex:
    if mode == "exact":
        return ExactIndex(data, layer)
    if mode == "approximate":
        return RpForestIndex(data, layer, trees=trees, leaf_size=leaf_size, seed=seed)
    raise IndexError_(f"unknown index mode {mode!r}")


def query_neighbors(
    index: ProbeIndex, train_labels: np.ndarray, vector: np.ndarray, k: int, query_id: str = ""
) -> NeighborSet:
    rows, dists = index.query(vector, k)
    return NeighborSet(
        query_id=query_id,
        layer=index.layer,
        k=k,
        rows=rows,
        distances=dists,
        labels=np.asarray(train_labels)[rows],
    )


def knn_predict_labels(labels: np.ndarray) -> int:
    """Plurality class of a neighbor label list; ties go to the smallest class index."""
    return int(np.bincount(labels).argmax())


def knn_predict(index: ProbeIndex, train_labels: np.ndarray, vector: np.ndarray, k: int) -> int:
    rows, _ = index.query(vector, k)
    return knn_predict_labels(np.asarray(train_labels)[rows])


def recall_eval(
    exact_index: ProbeIndex, approx_index: ProbeIndex, queries: np.ndarray, k: int
) -> float:
    """Mean fraction of true k-neighbors (by row id) the approximate index recovers."""
    if exact_index.layer != approx_index.layer:
        raise IndexError_(
            f"recall compares mismatched layers {exact_index.layer!r} vs {approx_index.layer!r}"
        )
    queries = np.asarray(queries, dtype=np.float64)
    total = 0.0
    for q in queries:
        true_rows, _ = exact_index.query(q, k)
        got_rows, _ = approx_index.query(q, k)
        total += len(set(true_rows.tolist()) & set(got_rows.tolist())) / k
    return total / queries.shape[0]
