"""Named instance subsets: selection descriptors, set algebra, persistence.

Membership is stored extensionally (a sorted id list) next to an intensional
provenance expression; replaying the provenance is a validation tool, not the
source of truth. Stores persist to a single versioned ``subsets.json`` per
bundle and serialize concurrent saves by last-write-wins with a monotonically
increasing revision.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .bundle import instance_sort_key
from .difficulty import ComputeResult, PATTERN_CODES, UNCLASSIFIED
from .errors import SubsetError

STORE_VERSION = 1

PAIRS = {
    "data_model": ("data", "model"),
    "data_human": ("data", "human"),
    "model_human": ("model", "human"),
}

SET_OPS = ("union", "intersection", "difference")


def canonical_members(ids) -> tuple[str, ...]:
    return tuple(sorted(set(ids), key=instance_sort_key))


# ---------------------------------------------------------------------------
# perspective values and binning (shared with the summary endpoint)


def perspective_values(result: ComputeResult, perspective: str) -> np.ndarray:
    if perspective == "data":
        return result.data_kdn
    if perspective == "model":
        return result.model_difficulty
    if perspective == "human":
        return result.human
    raise SubsetError(f"unknown perspective {perspective!r}")


def perspective_bins(
    result: ComputeResult, perspective: str, bins: int
) -> tuple[int, np.ndarray, np.ndarray]:
    """(bin count, per-instance bin index, present mask) for one perspective.

    The model axis bins by integer prediction depth (L + 1 bins); the other
    perspectives use ``bins`` equal-width bins over [0, 1] with 1.0 clamped
    into the last bin. Instances without a human value are masked out.
    """
    if perspective == "model":
        n_bins = len(result.probe_names)
        return n_bins, result.pd.astype(np.int64), np.ones(result.size, dtype=bool)
    values = perspective_values(result, perspective)
    present = ~np.isnan(values)
    idx = np.zeros(result.size, dtype=np.int64)
    safe = np.where(present, values, 0.0)
    idx[present] = np.minimum((safe[present] * bins).astype(np.int64), bins - 1)
    return bins, idx, present


# ---------------------------------------------------------------------------
# selection descriptors


@dataclass
class SelectionContext:
    """What a descriptor may touch: profiles plus projection/flow providers."""

    result: ComputeResult
    project: "callable | None" = None  # source -> Projection2D
    flow: "callable | None" = None  # base ids -> FlowGraph
    resolve_subset: "callable | None" = None  # subset id -> tuple of ids


def _interval(descriptor: dict, key: str) -> tuple[float, float] | None:
    raw = descriptor.get(key)
    if raw is None:
        return None
    if not (isinstance(raw, (list, tuple)) and len(raw) == 2):
        raise SubsetError(f"brush interval {key!r} must be [lo, hi]")
    lo, hi = float(raw[0]), float(raw[1])
    return (min(lo, hi), max(lo, hi))


def _points_in_polygon(points: np.ndarray, polygon: list[list[float]]) -> np.ndarray:
    """Ray-casting point-in-polygon test; boundary points count as inside."""
    poly = np.asarray(polygon, dtype=np.float64)
    if poly.ndim != 2 or poly.shape[0] < 3 or poly.shape[1] != 2:
        raise SubsetError("polygon needs at least 3 [x, y] points")
    x, y = points[:, 0], points[:, 1]
    inside = np.zeros(points.shape[0], dtype=bool)
    n = poly.shape[0]
    for a in range(n):
        b = (a + 1) % n
        xa, ya = poly[a]
        xb, yb = poly[b]
        crosses = ((ya > y) != (yb > y)) & (x < (xb - xa) * (y - ya) / (yb - ya + 1e-300) + xa)
        inside ^= crosses
        on_edge = (
            (np.minimum(xa, xb) - 1e-12 <= x)
            & (x <= np.maximum(xa, xb) + 1e-12)
            & (np.abs((xb - xa) * (y - ya) - (yb - ya) * (x - xa)) <= 1e-9)
        )
        inside |= on_edge
    return inside


def evaluate_descriptor(descriptor: dict, ctx: SelectionContext) -> tuple[str, ...]:
    """Deterministic membership of a selection descriptor over the profiled instances."""
    result = ctx.result
    kind = descriptor.get("kind")
    ids = np.array(result.ids, dtype=object)

    if kind == "brush":
        keep = np.ones(result.size, dtype=bool)
        seen = False
        for perspective in ("data", "model", "human"):
            interval = _interval(descriptor, perspective)
            if interval is None:
                continue
            seen = True
            values = perspective_values(result, perspective)
            present = ~np.isnan(values)
            keep &= present & (values >= interval[0]) & (values <= interval[1])
        if not seen:
            raise SubsetError("brush descriptor needs at least one of data/model/human")
        return canonical_members(ids[keep])

    if kind == "heatmap":
        pair = descriptor.get("pair")
        if pair not in PAIRS:
            raise SubsetError(f"unknown perspective pair {pair!r}")
        bins = int(descriptor.get("bins", 10))
        if bins < 1:
            raise SubsetError("bins must be >= 1")
        px, py = PAIRS[pair]
        nx, ix, present_x = perspective_bins(result, px, bins)
        ny, iy, present_y = perspective_bins(result, py, bins)
        cells = descriptor.get("cells") or []
        wanted = set()
        for cell in cells:
            cx, cy = int(cell[0]), int(cell[1])
            if not (0 <= cx < nx and 0 <= cy < ny):
                raise SubsetError(f"heatmap cell ({cx}, {cy}) outside {nx}x{ny} grid")
            wanted.add((cx, cy))
        keep = present_x & present_y
        keep &= np.fromiter(((a, b) in wanted for a, b in zip(ix, iy)), bool, result.size)
        return canonical_members(ids[keep])

    if kind == "confusion":
        C = result.n_classes
        wanted = set()
        for cell in descriptor.get("cells") or []:
            actual, predicted = int(cell[0]), int(cell[1])
            if not (0 <= actual < C and 0 <= predicted < C):
                raise SubsetError(f"confusion cell ({actual}, {predicted}) outside {C} classes")
            wanted.add((actual, predicted))
        keep = np.fromiter(
            ((int(a), int(p)) in wanted for a, p in zip(result.actual, result.predicted)),
            bool,
            result.size,
        )
        return canonical_members(ids[keep])

    if kind == "projection":
        if ctx.project is None:
            raise SubsetError("projection selections need computed projections")
        projection = ctx.project(descriptor.get("source", "pixel"))
        coords = projection.coords
        if "rect" in descriptor:
            x0, y0, x1, y1 = (float(v) for v in descriptor["rect"])
            keep = (
                (coords[:, 0] >= min(x0, x1))
                & (coords[:, 0] <= max(x0, x1))
                & (coords[:, 1] >= min(y0, y1))
                & (coords[:, 1] <= max(y0, y1))
            )
        elif "polygon" in descriptor:
            keep = _points_in_polygon(coords, descriptor["polygon"])
        else:
            raise SubsetError("projection descriptor needs 'rect' or 'polygon'")
        return canonical_members(np.array(projection.ids, dtype=object)[keep])

    if kind == "flow":
        if ctx.flow is None:
            raise SubsetError("flow selections need computed profiles")
        base = descriptor.get("base")
        if base is not None:
            if ctx.resolve_subset is None:
                raise SubsetError("flow descriptor referenced a base subset without a resolver")
            base_ids = ctx.resolve_subset(base)
        else:
            base_ids = result.ids
        graph = ctx.flow(base_ids)
        element = descriptor.get("element")
        if element not in graph.elements:
            raise SubsetError(f"unknown flow element {element!r}")
        return canonical_members(graph.elements[element])

    if kind == "pattern":
        codes = descriptor.get("codes") or []
        valid = set(PATTERN_CODES) | {UNCLASSIFIED}
        unknown = [c for c in codes if c not in valid]
        if unknown:
            raise SubsetError(f"unknown pattern codes {unknown}")
        wanted = set(codes)
        keep = np.fromiter((p in wanted for p in result.patterns), bool, result.size)
        return canonical_members(ids[keep])

    if kind == "ids":
        known = set(result.ids)
        members = descriptor.get("members") or []
        missing = [m for m in members if m not in known]
        if missing:
            raise SubsetError(f"unknown instance ids {missing[:3]}")
        return canonical_members(members)

    raise SubsetError(f"unknown selection kind {kind!r}")


# ---------------------------------------------------------------------------
# subsets and the store


@dataclass(frozen=True)
class Subset:
    id: str
    name: str
    members: tuple[str, ...]
    provenance: dict
    created_at: str

    @property
    def size(self) -> int:
        return len(self.members)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "name": self.name,
            "members": list(self.members),
            "provenance": self.provenance,
            "created_at": self.created_at,
        }


def combine_members(a: tuple[str, ...], b: tuple[str, ...], op: str) -> tuple[str, ...]:
    sa, sb = set(a), set(b)
    if op == "union":
        return canonical_members(sa | sb)
    if op == "intersection":
        return canonical_members(sa & sb)
    if op == "difference":
        return canonical_members(sa - sb)
    raise SubsetError(f"unknown set operation {op!r}")


def complement_members(members: tuple[str, ...], universe) -> tuple[str, ...]:
    return canonical_members(set(universe) - set(members))


class SubsetStore:
    """Single-writer subset registry for one bundle, persisted as subsets.json."""

    def __init__(self, path: str | Path, fingerprint: int):
        self.path = Path(path)
        self.fingerprint = fingerprint
        self.revision = 0
        self.subsets: dict[str, Subset] = {}
        self._counter = 0
        self.stale = False

    # -- creation ----------------------------------------------------------

    def _next_id(self) -> str:
        self._counter += 1
        return f"s{self._counter}"

    def _register(self, members, provenance: dict, name: str | None) -> Subset:
        sid = self._next_id()
        subset = Subset(
            id=sid,
            name=name or sid,
            members=canonical_members(members),
            provenance=provenance,
            created_at=datetime.now(timezone.utc).isoformat(),
        )
        self.subsets[sid] = subset
        return subset

    def create_from_selection(
        self, descriptor: dict, ctx: SelectionContext, name: str | None = None
    ) -> Subset:
        members = evaluate_descriptor(descriptor, ctx)
        provenance = {
            "kind": "selection",
            "descriptor": descriptor,
            "fingerprint": self.fingerprint,
        }
        return self._register(members, provenance, name)

    def create_explicit(self, members, provenance: dict, name: str | None = None) -> Subset:
        return self._register(members, provenance, name)

    def combine(self, a_id: str, b_id: str, op: str, name: str | None = None) -> Subset:
        a, b = self.get(a_id), self.get(b_id)
        for operand in (a, b):
            fp = operand.provenance.get("fingerprint")
            if fp is not None and fp != self.fingerprint:
                raise SubsetError(
                    f"subset {operand.id!r} belongs to a different bundle (fingerprint {fp})"
                )
        members = combine_members(a.members, b.members, op)
        provenance = {
            "kind": "combine",
            "op": op,
            "operands": [a_id, b_id],
            "fingerprint": self.fingerprint,
        }
        return self._register(members, provenance, name)

    def get(self, subset_id: str) -> Subset:
        try:
            return self.subsets[subset_id]
        except KeyError:
            raise SubsetError(f"unknown subset {subset_id!r}") from None

    def list(self) -> list[Subset]:
        return [self.subsets[k] for k in sorted(self.subsets, key=lambda s: int(s[1:]))]

    # -- provenance replay ---------------------------------------------------

    def replay(self, subset: Subset, ctx: SelectionContext) -> tuple[str, ...]:
        """Re-evaluate a subset's provenance expression against current profiles."""
        prov = subset.provenance
        if prov.get("kind") == "selection":
            return evaluate_descriptor(prov["descriptor"], ctx)
        if prov.get("kind") == "combine":
            a, b = (self.replay(self.get(sid), ctx) for sid in prov["operands"])
            return combine_members(a, b, prov["op"])
        if prov.get("kind") == "explicit":
            return subset.members
        raise SubsetError(f"unknown provenance kind {prov.get('kind')!r}")

    # -- persistence ---------------------------------------------------------

    def to_json_bytes(self) -> bytes:
        payload = {
            "version": STORE_VERSION,
            "bundle_fingerprint": self.fingerprint,
            "revision": self.revision,
            "subsets": [s.to_dict() for s in self.list()],
        }
        return (json.dumps(payload, sort_keys=True, indent=2) + "\n").encode("utf-8")

    def save(self) -> int:
        """Write atomically; revision advances past any concurrent writer's."""
        disk_revision = 0
        if self.path.is_file():
            try:
                disk_revision = int(json.loads(self.path.read_text("utf-8")).get("revision", 0))
            except (json.JSONDecodeError, ValueError, TypeError):
                disk_revision = 0
        self.revision = max(self.revision, disk_revision) + 1
        tmp = self.path.with_suffix(".tmp")
        tmp.write_bytes(self.to_json_bytes())
        os.replace(tmp, self.path)
        return self.revision

    @classmethod
    def load(cls, path: str | Path, fingerprint: int) -> "SubsetStore":
        path = Path(path)
        store = cls(path, fingerprint)
        if not path.is_file():
            return store
        try:
            raw = json.loads(path.read_text("utf-8"))
        except json.JSONDecodeError as exc:
            raise SubsetError(f"{path.name}: not valid JSON: {exc}") from exc
        if raw.get("version") != STORE_VERSION:
            raise SubsetError(
                f"{path.name}: store version {raw.get('version')!r} unsupported (expected {STORE_VERSION})"
            )
        store.revision = int(raw.get("revision", 0))
        stored_fp = raw.get("bundle_fingerprint")
        store.stale = stored_fp != fingerprint
        for entry in raw.get("subsets", []):
            subset = Subset(
                id=entry["id"],
                name=entry["name"],
                members=tuple(entry["members"]),
                provenance=entry["provenance"],
                created_at=entry["created_at"],
            )
            store.subsets[subset.id] = subset
            number = int(subset.id[1:]) if subset.id[1:].isdigit() else 0
            store._counter = max(store._counter, number)
        return store


def subset_to_csv(subset: Subset) -> str:
    return "instance_id\n" + "".join(f"{iid}\n" for iid in subset.members)
