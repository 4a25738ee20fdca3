"""Oracles and hand fixtures shared between module tests and the acceptance suite."""

from __future__ import annotations

import numpy as np

from difflens.difficulty import (
    ComputeResult,
    DifficultyConfig,
    IndexParams,
    prediction_depth,
)


def brute_force_neighbors(train: np.ndarray, query: np.ndarray, k: int) -> list[int]:
    """O(n*d) scan with explicit per-row sums; ties broken by lower row index."""
    q = np.asarray(query, dtype=np.float64)
    scored = []
    for row in range(train.shape[0]):
        diff = np.asarray(train[row], dtype=np.float64) - q
        scored.append((float(np.sum(diff * diff)), row))
    scored.sort()
    return [row for _, row in scored[:k]]


def brute_force_kdn(
    train: np.ndarray, labels: np.ndarray, query: np.ndarray, reference: int, k: int
) -> float:
    rows = brute_force_neighbors(train, query, k)
    return sum(1 for r in rows if labels[r] != reference) / k


def reverse_scan_depth(trace, final) -> tuple[int, bool]:
    """Independent prediction-depth reference: walk the trace backwards."""
    last = len(trace) - 1
    if trace[last] != final:
        return last, True
    i = last
    while i > 0 and trace[i - 1] == final:
        i -= 1
    return i, False


def make_result(
    traces: list[list[int]],
    finals: list[int],
    actuals: list[int],
    n_classes: int,
    probe_names: tuple[str, ...] | None = None,
) -> ComputeResult:
    """A minimal ComputeResult for flow tests, derived from hand-written traces."""
    traces_arr = np.asarray(traces, dtype=np.int64)
    m, n_probes = traces_arr.shape
    probe_names = probe_names or ("input",) + tuple(f"layer_{i}" for i in range(n_probes - 1))
    finals_arr = np.asarray(finals, dtype=np.int64)
    actual = np.asarray(actuals, dtype=np.int64)
    pd = np.empty(m, dtype=np.int64)
    never = np.empty(m, dtype=bool)
    for i in range(m):
        pd[i], never[i] = prediction_depth(traces_arr[i].tolist(), int(finals_arr[i]))
    correct = finals_arr == actual
    zeros = np.zeros(m)
    return ComputeResult(
        config=DifficultyConfig(),
        params=IndexParams(),
        ids=tuple(f"test/{i}" for i in range(m)),
        probe_names=probe_names,
        n_classes=n_classes,
        actual=actual,
        predicted=finals_arr,
        data_kdn=zeros,
        layer_kdn=np.zeros((m, n_probes)),
        pd=pd,
        model_difficulty=pd / (n_probes - 1),
        human=np.full(m, np.nan),
        correct=correct,
        never_aligned=never,
        patterns=tuple("unclassified" for _ in range(m)),
        traces=traces_arr,
        neighbor_rows={},
        neighbor_dists={},
        thresholds={"mode": "fixed", "data": 0.5, "model": 0.5, "human": 0.5},
        fingerprint=0,
    )


# The 8-instance, 2-layer flow fixture (three probes) with its full hand enumeration.
HAND_TRACES = [
    [0, 0, 0],  # i0: depth 0, correct -> top everywhere
    [1, 1, 1],  # i1: depth 0, incorrect -> bottom everywhere
    [2, 0, 0],  # i2: depth 1, correct
    [0, 1, 1],  # i3: depth 1, correct
    [1, 0, 2],  # i4: depth 2, correct
    [0, 1, 0],  # i5: never aligned, correct -> class nodes in every column
    [2, 2, 1],  # i6: never aligned, incorrect -> bottom at the last column
    [1, 1, 2],  # i7: depth 2, incorrect
]
HAND_FINALS = [0, 1, 0, 1, 2, 2, 0, 2]
HAND_ACTUALS = [0, 0, 0, 1, 2, 2, 1, 0]

# per column: (top ids, bottom ids, {(predicted, actual): ids})
HAND_COLUMNS = [
    (
        ["test/0"],
        ["test/1"],
        {
            (0, 1): ["test/3"],
            (0, 2): ["test/5"],
            (1, 0): ["test/7"],
            (1, 2): ["test/4"],
            (2, 0): ["test/2"],
            (2, 1): ["test/6"],
        },
    ),
    (
        ["test/0", "test/2", "test/3"],
        ["test/1"],
        {
            (0, 2): ["test/4"],
            (1, 0): ["test/7"],
            (1, 2): ["test/5"],
            (2, 1): ["test/6"],
        },
    ),
    (
        ["test/0", "test/2", "test/3", "test/4"],
        ["test/1", "test/6", "test/7"],
        {
            (0, 2): ["test/5"],
        },
    ),
]

# per boundary: (source short key, target short key) -> ids
HAND_LINKS = [
    {
        ("top", "top"): ["test/0"],
        ("bottom", "bottom"): ["test/1"],
        ("r2.0", "top"): ["test/2"],
        ("r0.1", "top"): ["test/3"],
        ("r1.2", "r0.2"): ["test/4"],
        ("r0.2", "r1.2"): ["test/5"],
        ("r2.1", "r2.1"): ["test/6"],
        ("r1.0", "r1.0"): ["test/7"],
    },
    {
        ("top", "top"): ["test/0", "test/2", "test/3"],
        ("bottom", "bottom"): ["test/1"],
        ("r0.2", "top"): ["test/4"],
        ("r1.2", "r0.2"): ["test/5"],
        ("r2.1", "bottom"): ["test/6"],
        ("r1.0", "bottom"): ["test/7"],
    },
]


def hand_fixture_result() -> ComputeResult:
    return make_result(HAND_TRACES, HAND_FINALS, HAND_ACTUALS, n_classes=3)


def check_flow_conservation(graph) -> None:
    """Exact integer mass checks every FlowGraph must satisfy."""
    n = graph.n
    cumulative_prev = -1
    for col in graph.columns:
        class_mass = sum(node.count for node in col.class_nodes)
        assert class_mass + col.top.count + col.bottom.count == n
        for node in col.class_nodes:
            assert node.count == sum(r.count for r in node.rects)
        cumulative = col.top.count + col.bottom.count
        assert cumulative >= cumulative_prev
        cumulative_prev = cumulative
    by_boundary: dict[int, int] = {}
    for link in graph.links:
        by_boundary[link.column] = by_boundary.get(link.column, 0) + link.count
    for col in range(len(graph.columns) - 1):
        assert by_boundary.get(col, 0) == n
