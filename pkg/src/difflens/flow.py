"""Difficulty-flow aggregation: per-probe class nodes, compressed nodes, links.

Column c holds the k-NN probe predictions at probe c. An instance occupies a
class node (keyed by predicted class, subdivided by actual class) for every
column before its prediction depth and a compressed node (top when its final
prediction is correct, bottom when not) from its depth onward. Never-aligned
instances are the exception: no probe ever agrees with the final prediction,
so they stay in class nodes through the last column, where the incorrect ones
join the bottom node.

The aggregator emits counts plus the underlying instance ids; pixel layout is
the caller's concern.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .difficulty import ComputeResult
from .errors import FlowError

TOP = ("top",)
BOTTOM = ("bottom",)


@dataclass(frozen=True)
class FlowRect:
    id: str
    predicted: int
    actual: int
    count: int
    ids: tuple[str, ...]


@dataclass(frozen=True)
class ClassNode:
    id: str
    predicted: int
    count: int
    rects: tuple[FlowRect, ...]


@dataclass(frozen=True)
class CompressedNode:
    id: str
    count: int
    class_counts: tuple[int, ...]  # histogram over actual classes
    ids: tuple[str, ...]


@dataclass(frozen=True)
class FlowColumn:
    index: int
    probe: str
    class_nodes: tuple[ClassNode, ...]
    top: CompressedNode
    bottom: CompressedNode


@dataclass(frozen=True)
class FlowLink:
    id: str
    column: int  # source column
    source: str  # element id of the source rect or compressed node
    target: str
    count: int
    ids: tuple[str, ...]


@dataclass(frozen=True)
class FlowGraph:
    n: int
    n_classes: int
    columns: tuple[FlowColumn, ...]
    links: tuple[FlowLink, ...]
    elements: dict[str, tuple[str, ...]]  # element id -> aggregated instance ids


def _position(result: ComputeResult, i: int, col: int, last: int) -> tuple:
    if result.never_aligned[i]:
        if col == last and not result.correct[i]:
            return BOTTOM
        return ("rect", int(result.traces[i, col]), int(result.actual[i]))
    if col >= result.pd[i]:
        return TOP if result.correct[i] else BOTTOM
    return ("rect", int(result.traces[i, col]), int(result.actual[i]))


def _endpoint_key(pos: tuple) -> tuple:
    return (0, pos[1], pos[2]) if pos[0] == "rect" else ((1, 0, 0) if pos == TOP else (2, 0, 0))


def _short(pos: tuple) -> str:
    return f"r{pos[1]}.{pos[2]}" if pos[0] == "rect" else pos[0]


def _element_id(col: int, pos: tuple) -> str:
    if pos[0] == "rect":
        return f"col{col}:rect:{pos[1]}:{pos[2]}"
    return f"col{col}:{pos[0]}"


def build_flow(result: ComputeResult, subset_ids) -> FlowGraph:
    """Aggregate the subset's probe traces into the flow structure."""
    index_of = result.index_of
    try:
        members = sorted(index_of[iid] for iid in subset_ids)
    except KeyError as exc:
        raise FlowError(f"unknown instance id {exc.args[0]!r} in subset") from exc
    if not members:
        raise FlowError("cannot build a flow over an empty subset")

    n_probes = len(result.probe_names)
    last = n_probes - 1
    C = result.n_classes
    elements: dict[str, list[str]] = {}
    columns: list[FlowColumn] = []

    occupancy: list[dict[tuple, list[int]]] = []
    for col in range(n_probes):
        groups: dict[tuple, list[int]] = {}
        for i in members:
            groups.setdefault(_position(result, i, col, last), []).append(i)
        occupancy.append(groups)

        by_class: dict[int, dict[int, list[int]]] = {}
        for pos, rows in groups.items():
            if pos[0] == "rect":
                by_class.setdefault(pos[1], {})[pos[2]] = rows
        class_nodes = []
        for predicted in sorted(by_class):
            rects = []
            for actual in sorted(by_class[predicted]):
                rows = by_class[predicted][actual]
                rid = _element_id(col, ("rect", predicted, actual))
                ids = tuple(result.ids[i] for i in rows)
                elements[rid] = list(ids)
                rects.append(
                    FlowRect(id=rid, predicted=predicted, actual=actual, count=len(rows), ids=ids)
                )
            node_id = f"col{col}:class{predicted}"
            node_ids = tuple(iid for rect in rects for iid in rect.ids)
            elements[node_id] = list(node_ids)
            class_nodes.append(
                ClassNode(
                    id=node_id,
                    predicted=predicted,
                    count=sum(r.count for r in rects),
                    rects=tuple(rects),
                )
            )

        compressed = {}
        for pos in (TOP, BOTTOM):
            rows = groups.get(pos, [])
            counts = [0] * C
            for i in rows:
                counts[int(result.actual[i])] += 1
            cid = _element_id(col, pos)
            ids = tuple(result.ids[i] for i in rows)
            elements[cid] = list(ids)
            compressed[pos] = CompressedNode(
                id=cid, count=len(rows), class_counts=tuple(counts), ids=ids
            )

        columns.append(
            FlowColumn(
                index=col,
                probe=result.probe_names[col],
                class_nodes=tuple(class_nodes),
                top=compressed[TOP],
                bottom=compressed[BOTTOM],
            )
        )

    links: list[FlowLink] = []
    for col in range(n_probes - 1):
        flows: dict[tuple[tuple, tuple], list[int]] = {}
        for i in members:
            src = _position(result, i, col, last)
            dst = _position(result, i, col + 1, last)
            flows.setdefault((src, dst), []).append(i)
        for src, dst in sorted(flows, key=lambda sd: (_endpoint_key(sd[0]), _endpoint_key(sd[1]))):
            rows = flows[(src, dst)]
            lid = f"link{col}:{_short(src)}>{_short(dst)}"
            ids = tuple(result.ids[i] for i in rows)
            elements[lid] = list(ids)
            links.append(
                FlowLink(
                    id=lid,
                    column=col,
                    source=_element_id(col, src),
                    target=_element_id(col + 1, dst),
                    count=len(rows),
                    ids=ids,
                )
            )

    return FlowGraph(
        n=len(members),
        n_classes=C,
        columns=tuple(columns),
        links=tuple(links),
        elements={k: tuple(v) for k, v in elements.items()},
    )


def flow_click_select(graph: FlowGraph, element_id: str) -> tuple[str, ...]:
    """The exact instance ids a node, rectangle, or link aggregates."""
    try:
        return graph.elements[element_id]
    except KeyError:
        raise FlowError(f"unknown flow element {element_id!r}") from None


def flow_to_json(graph: FlowGraph) -> dict:
    return {
        "n": graph.n,
        "n_classes": graph.n_classes,
        "columns": [
            {
                "index": col.index,
                "probe": col.probe,
                "class_nodes": [
                    {
                        "id": node.id,
                        "predicted": node.predicted,
                        "count": node.count,
                        "rects": [
                            {
                                "id": rect.id,
                                "predicted": rect.predicted,
                                "actual": rect.actual,
                                "count": rect.count,
                                "ids": list(rect.ids),
                            }
                            for rect in node.rects
                        ],
                    }
                    for node in col.class_nodes
                ],
                "top": {
                    "id": col.top.id,
                    "count": col.top.count,
                    "class_counts": list(col.top.class_counts),
                    "ids": list(col.top.ids),
                },
                "bottom": {
                    "id": col.bottom.id,
                    "count": col.bottom.count,
                    "class_counts": list(col.bottom.class_counts),
                    "ids": list(col.bottom.ids),
                },
            }
            for col in graph.columns
        ],
        "links": [
            {
                "id": link.id,
                "column": link.column,
                "source": link.source,
                "target": link.target,
                "count": link.count,
                "ids": list(link.ids),
            }
            for link in graph.links
        ],
    }


@dataclass(frozen=True)
class PcpAxes:
    """Per-instance polylines: the data axis followed by every probe's kDN axis."""

    axes: tuple[str, ...]
    ids: tuple[str, ...]
    values: np.ndarray  # (len(ids), len(axes)), all in [0, 1]


def pcp_data(result: ComputeResult, subset_ids) -> PcpAxes:
    index_of = result.index_of
    try:
        members = sorted(index_of[iid] for iid in subset_ids)
    except KeyError as exc:
        raise FlowError(f"unknown instance id {exc.args[0]!r} in subset") from exc
    if not members:
        raise FlowError("cannot build PCP data over an empty subset")
    rows = np.asarray(members, dtype=np.int64)
    values = np.hstack([result.data_kdn[rows, None], result.layer_kdn[rows]])
    axes = ("data",) + tuple(f"probe:{name}" for name in result.probe_names)
    return PcpAxes(axes=axes, ids=tuple(result.ids[i] for i in members), values=values)
