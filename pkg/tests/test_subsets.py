"""Subset manager tests: descriptor oracles, algebra laws, persistence."""

from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from difflens.difficulty import project_2d
from difflens.errors import SubsetError
from difflens.flow import build_flow
from difflens.subsets import (
    SelectionContext,
    SubsetStore,
    canonical_members,
    combine_members,
    complement_members,
    evaluate_descriptor,
    subset_to_csv,
)


@pytest.fixture(scope="module")
def ctx(small_bundle, small_result):
    return SelectionContext(
        result=small_result,
        project=lambda source: project_2d(small_bundle, small_result, source),
        flow=lambda ids: build_flow(small_result, ids),
    )


def test_brush_box_matches_linear_scan(small_result, ctx):
    descriptor = {"kind": "brush", "data": [0, 0.2], "model": [0, 0.2], "human": [0, 0.2]}
    got = set(evaluate_descriptor(descriptor, ctx))
    expected = set()
    for i, iid in enumerate(small_result.ids):
        h = small_result.human[i]
        if (
            small_result.data_kdn[i] <= 0.2
            and small_result.model_difficulty[i] <= 0.2
            and not np.isnan(h)
            and h <= 0.2
        ):
            expected.add(iid)
    assert got == expected
    assert expected  # the planted bundle has easy mass


def test_brush_empty_region_allowed(ctx):
    got = evaluate_descriptor({"kind": "brush", "data": [0.96, 0.97]}, ctx)
    assert got == ()


def test_confusion_diagonal_union_is_correct_set(small_result, ctx):
    C = small_result.n_classes
    descriptor = {"kind": "confusion", "cells": [[c, c] for c in range(C)]}
    got = set(evaluate_descriptor(descriptor, ctx))
    expected = {iid for i, iid in enumerate(small_result.ids) if small_result.correct[i]}
    assert got == expected


def test_heatmap_cells_match_binning(small_result, ctx):
    descriptor = {"kind": "heatmap", "pair": "data_model", "bins": 10, "cells": [[0, 0]]}
    got = set(evaluate_descriptor(descriptor, ctx))
    expected = {
        iid
        for i, iid in enumerate(small_result.ids)
        if small_result.data_kdn[i] < 0.1 and small_result.pd[i] == 0
    }
    assert got == expected
    with pytest.raises(SubsetError, match="outside"):
        evaluate_descriptor({"kind": "heatmap", "pair": "data_model", "cells": [[99, 0]]}, ctx)
    with pytest.raises(SubsetError, match="unknown perspective pair"):
        evaluate_descriptor({"kind": "heatmap", "pair": "data_data", "cells": []}, ctx)


def test_pattern_descriptor(small_result, ctx):
    got = set(evaluate_descriptor({"kind": "pattern", "codes": ["1b"]}, ctx))
    expected = {iid for i, iid in enumerate(small_result.ids) if small_result.patterns[i] == "1b"}
    assert got == expected
    with pytest.raises(SubsetError, match="unknown pattern"):
        evaluate_descriptor({"kind": "pattern", "codes": ["9z"]}, ctx)


def test_projection_rect_and_polygon_agree(small_result, ctx):
    projection = ctx.project("pixel")
    x0, y0 = projection.coords.min(axis=0)
    x1, y1 = np.percentile(projection.coords, 60, axis=0)
    rect_ids = evaluate_descriptor(
        {"kind": "projection", "source": "pixel", "rect": [x0, y0, x1, y1]}, ctx
    )
    polygon = [[x0, y0], [x1, y0], [x1, y1], [x0, y1]]
    poly_ids = evaluate_descriptor(
        {"kind": "projection", "source": "pixel", "polygon": polygon}, ctx
    )
    assert set(rect_ids) == set(poly_ids)
    assert rect_ids  # 60th percentile corner box is nonempty
    oracle = {
        iid
        for iid, (x, y) in zip(projection.ids, projection.coords)
        if x0 <= x <= x1 and y0 <= y <= y1
    }
    assert set(rect_ids) == oracle


def test_flow_element_descriptor(small_result, ctx):
    graph = build_flow(small_result, small_result.ids)
    got = evaluate_descriptor({"kind": "flow", "element": "col0:top"}, ctx)
    assert got == tuple(sorted(graph.columns[0].top.ids, key=lambda s: (s.split("/")[0], int(s.split("/")[1]))))
    with pytest.raises(SubsetError, match="unknown flow element"):
        evaluate_descriptor({"kind": "flow", "element": "colX:zzz"}, ctx)


def test_ids_descriptor_and_unknown_kind(ctx):
    got = evaluate_descriptor({"kind": "ids", "members": ["test/3", "test/1", "test/3"]}, ctx)
    assert got == ("test/1", "test/3")
    with pytest.raises(SubsetError, match="unknown instance ids"):
        evaluate_descriptor({"kind": "ids", "members": ["test/99999"]}, ctx)
    with pytest.raises(SubsetError, match="unknown selection kind"):
        evaluate_descriptor({"kind": "telepathy"}, ctx)


# -- set algebra ---------------------------------------------------------------


universe = [f"test/{i}" for i in range(40)]
member_sets = st.sets(st.sampled_from(universe), max_size=40)


@given(member_sets)
def test_union_idempotent(a):
    ca = canonical_members(a)
    assert combine_members(ca, ca, "union") == ca


@given(member_sets)
def test_intersection_with_empty(a):
    assert combine_members(canonical_members(a), (), "intersection") == ()


@settings(max_examples=60)
@given(member_sets, member_sets)
def test_union_difference_containment(a, b):
    ca, cb = canonical_members(a), canonical_members(b)
    u = combine_members(ca, cb, "union")
    assert set(combine_members(u, cb, "difference")) <= set(ca)


@settings(max_examples=60)
@given(member_sets, member_sets)
def test_commutativity(a, b):
    ca, cb = canonical_members(a), canonical_members(b)
    for op in ("union", "intersection"):
        assert combine_members(ca, cb, op) == combine_members(cb, ca, op)


@settings(max_examples=60)
@given(member_sets, member_sets, member_sets)
def test_associativity(a, b, c):
    ca, cb, cc = (canonical_members(x) for x in (a, b, c))
    for op in ("union", "intersection"):
        lhs = combine_members(combine_members(ca, cb, op), cc, op)
        rhs = combine_members(ca, combine_members(cb, cc, op), op)
        assert lhs == rhs


@settings(max_examples=60)
@given(member_sets, member_sets)
def test_de_morgan(a, b):
    ca, cb = canonical_members(a), canonical_members(b)
    lhs = complement_members(combine_members(ca, cb, "union"), universe)
    rhs = combine_members(
        complement_members(ca, universe), complement_members(cb, universe), "intersection"
    )
    assert lhs == rhs


def test_unknown_set_op():
    with pytest.raises(SubsetError, match="unknown set operation"):
        combine_members((), (), "xor")


# -- store ---------------------------------------------------------------------


def test_store_roundtrip_byte_stable(tmp_path, small_result, ctx):
    rng = np.random.default_rng(1)
    store = SubsetStore(tmp_path / "subsets.json", fingerprint=111)
    for i in range(10):
        members = rng.choice(np.array(small_result.ids, dtype=object),
                             size=int(rng.integers(0, 30)), replace=False)
        store.create_explicit(members, {"kind": "explicit"}, name=f"random {i}")
    store.save()
    on_disk = store.path.read_bytes()
    loaded = SubsetStore.load(store.path, fingerprint=111)
    assert loaded.to_json_bytes() == on_disk
    assert not loaded.stale
    assert [s.id for s in loaded.list()] == [s.id for s in store.list()]
    for a, b in zip(loaded.list(), store.list()):
        assert a == b


def test_store_stale_on_fingerprint_change(tmp_path):
    store = SubsetStore(tmp_path / "subsets.json", fingerprint=1)
    store.create_explicit(("test/0",), {"kind": "explicit"})
    store.save()
    reloaded = SubsetStore.load(store.path, fingerprint=2)
    assert reloaded.stale


def test_store_version_mismatch(tmp_path):
    path = tmp_path / "subsets.json"
    path.write_text(json.dumps({"version": 99, "revision": 1, "subsets": []}))
    with pytest.raises(SubsetError, match="version"):
        SubsetStore.load(path, fingerprint=0)


def test_interleaved_saves_last_write_wins(tmp_path):
    path = tmp_path / "subsets.json"
    a = SubsetStore(path, fingerprint=7)
    b = SubsetStore(path, fingerprint=7)
    a.create_explicit(("test/0",), {"kind": "explicit"}, name="from a")
    b.create_explicit(("test/1",), {"kind": "explicit"}, name="from b")
    revisions = [a.save(), b.save(), a.save()]
    assert revisions == sorted(revisions) and len(set(revisions)) == 3
    final = SubsetStore.load(path, fingerprint=7)
    assert final.revision == revisions[-1]
    assert [s.name for s in final.list()] == ["from a"]  # last writer's content


def test_store_counter_continues_after_load(tmp_path):
    store = SubsetStore(tmp_path / "subsets.json", fingerprint=3)
    s1 = store.create_explicit((), {"kind": "explicit"})
    store.save()
    loaded = SubsetStore.load(store.path, fingerprint=3)
    s2 = loaded.create_explicit((), {"kind": "explicit"})
    assert s1.id == "s1" and s2.id == "s2"


def test_provenance_replay_matches_membership(tmp_path, small_result, ctx):
    store = SubsetStore(tmp_path / "subsets.json", fingerprint=small_result.fingerprint)
    a = store.create_from_selection({"kind": "brush", "data": [0, 0.3]}, ctx, name="easy data")
    b = store.create_from_selection({"kind": "pattern", "codes": ["1a", "1b"]}, ctx)
    c = store.combine(a.id, b.id, "intersection")
    for subset in (a, b, c):
        assert store.replay(subset, ctx) == subset.members


def test_combine_semantics_and_cross_bundle_guard(tmp_path, ctx):
    store = SubsetStore(tmp_path / "subsets.json", fingerprint=5)
    a = store.create_explicit(("test/1", "test/2"), {"kind": "explicit", "fingerprint": 5})
    b = store.create_explicit(("test/2", "test/3"), {"kind": "explicit", "fingerprint": 5})
    assert store.combine(a.id, b.id, "union").members == ("test/1", "test/2", "test/3")
    assert store.combine(a.id, b.id, "intersection").members == ("test/2",)
    assert store.combine(a.id, b.id, "difference").members == ("test/1",)
    foreign = store.create_explicit(("test/9",), {"kind": "explicit", "fingerprint": 99})
    with pytest.raises(SubsetError, match="different bundle"):
        store.combine(a.id, foreign.id, "union")
    with pytest.raises(SubsetError, match="unknown subset"):
        store.get("s404")


def test_subset_csv_export(tmp_path):
    store = SubsetStore(tmp_path / "subsets.json", fingerprint=0)
    s = store.create_explicit(("test/2", "test/0"), {"kind": "explicit"})
    assert subset_to_csv(s) == "instance_id\ntest/0\ntest/2\n"
