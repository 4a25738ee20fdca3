"""API tests: schema contracts, byte-determinism, endpoint semantics."""

from __future__ import annotations

import json
import shutil
from pathlib import Path

import jsonschema
import numpy as np
import pytest
from fastapi.testclient import TestClient

from difflens.bundle import load_bundle
from difflens.difficulty import DifficultyConfig, IndexParams, export_profiles_csv, run_pipeline
from difflens.flow import build_flow, flow_to_json
from difflens.server import create_app

SCHEMA_DIR = Path(__file__).resolve().parent.parent / "schemas"


def load_schema(name: str) -> dict:
    return json.loads((SCHEMA_DIR / f"{name}.schema.json").read_text())


def check(name: str, payload: dict) -> None:
    jsonschema.validate(payload, load_schema(name), cls=jsonschema.Draft202012Validator)


def fastapi_bytes(payload: dict) -> bytes:
    return json.dumps(
        payload, ensure_ascii=False, allow_nan=False, indent=None, separators=(",", ":")
    ).encode("utf-8")


@pytest.fixture(scope="module")
def api_bundle_dir(small_bundle_dir, tmp_path_factory) -> Path:
    dst = tmp_path_factory.mktemp("api") / "bundle"
    shutil.copytree(small_bundle_dir, dst)
    return dst


@pytest.fixture(scope="module")
def client(api_bundle_dir) -> TestClient:
    app = create_app(api_bundle_dir, DifficultyConfig(k=5), IndexParams(mode="exact"))
    with TestClient(app) as c:
        assert c.post("/api/compute", json={}).status_code == 200
        yield c


@pytest.fixture(scope="module")
def api_result(api_bundle_dir):
    return run_pipeline(load_bundle(api_bundle_dir), DifficultyConfig(k=5), IndexParams(mode="exact"))


@pytest.fixture(scope="module")
def clean_client(clean_bundle_dir, tmp_path_factory) -> TestClient:
    dst = tmp_path_factory.mktemp("api") / "clean"
    shutil.copytree(clean_bundle_dir, dst)
    app = create_app(dst, DifficultyConfig(k=5), IndexParams(mode="exact"), precompute=True)
    with TestClient(app) as c:
        yield c


def test_not_computed_responds_409(api_bundle_dir):
    app = create_app(api_bundle_dir, DifficultyConfig(k=5), IndexParams(mode="exact"))
    with TestClient(app) as c:
        r = c.get("/api/summary")
        assert r.status_code == 409
        body = r.json()
        assert body["code"] == "not_computed"
        check("error", body)
        assert c.get("/api/status").json()["state"] == "not_computed"


def test_status_schema_and_content(client, api_result):
    body = client.get("/api/status").json()
    check("status", body)
    assert body["state"] == "ready"
    assert body["n_profiled"] == api_result.size
    assert body["accuracy"] == pytest.approx(float(api_result.correct.mean()))
    assert body["mean_data_kdn"] == pytest.approx(float(api_result.data_kdn.mean()))


def test_summary_conserves_mass_and_matches_recount(client, api_result):
    body = client.get("/api/summary", params={"pair": "data_model"}).json()
    check("summary", body)
    assert body["total"] == api_result.size  # no human axis -> nothing excluded
    assert sum(map(sum, body["counts"])) == body["total"]
    assert body["y"]["bins"] == len(api_result.probe_names)  # depth axis is integer-binned

    # offline recount from the exported profile CSV
    lines = export_profiles_csv(api_result).splitlines()[1:]
    counts = np.zeros((10, len(api_result.probe_names)), dtype=int)
    for line in lines:
        fields = line.split(",")
        data = float(fields[1])
        depth = int(fields[2 + len(api_result.probe_names)])
        counts[min(int(data * 10), 9), depth] += 1
    assert counts.tolist() == body["counts"]
    assert counts.sum(axis=1).tolist() == body["x_marginal"]
    assert counts.sum(axis=0).tolist() == body["y_marginal"]


def test_summary_human_pair_excludes_absent(client, api_result):
    body = client.get("/api/summary", params={"pair": "data_human"}).json()
    present = int((~np.isnan(api_result.human)).sum())
    assert body["total"] == present
    assert body["excluded"] == api_result.size - present


def test_summary_unknown_pair(client):
    r = client.get("/api/summary", params={"pair": "data_data"})
    assert r.status_code == 422
    check("error", r.json())


def test_summary_all_easy_mass_in_origin_bin(clean_client):
    body = clean_client.get("/api/summary", params={"pair": "data_model"}).json()
    assert body["counts"][0][0] == body["total"]


def test_confusion_schema_and_accuracy(client, api_result, small_bundle_dir):
    from difflens.synth import load_expectations

    body = client.get("/api/confusion").json()
    check("confusion", body)
    counts = np.asarray(body["counts"])
    assert counts.sum() == api_result.size
    expectations = load_expectations(small_bundle_dir)
    assert np.trace(counts) / counts.sum() == pytest.approx(expectations["accuracy"])


def test_confusion_all_correct_is_diagonal(clean_client):
    body = clean_client.get("/api/confusion").json()
    counts = np.asarray(body["counts"])
    assert np.trace(counts) == counts.sum() == body["total"]


def test_confusion_empty_subset_zero_matrix(client):
    created = client.post(
        "/api/subsets",
        json={"op": "create", "descriptor": {"kind": "brush", "data": [0.97, 0.98]}, "name": "empty"},
    ).json()
    check("subset_mutation", created)
    sid = created["subset"]["id"]
    assert created["subset"]["size"] == 0
    body = client.get("/api/confusion", params={"subset": sid}).json()
    assert sum(map(sum, body["counts"])) == 0 and body["total"] == 0


def test_flow_passthrough_byte_for_byte(client, api_result):
    r = client.get("/api/flow")
    body = r.json()
    check("flow", body)
    expected = flow_to_json(build_flow(api_result, api_result.ids))
    expected["revision"] = body["revision"]
    assert r.content == fastapi_bytes(expected)


def test_pcp_schema_and_values(client, api_result):
    body = client.get("/api/pcp").json()
    check("pcp", body)
    assert len(body["axes"]) == len(api_result.probe_names) + 1
    assert body["values"][0] == [float(api_result.data_kdn[0])] + [
        float(v) for v in api_result.layer_kdn[0]
    ]


def test_projection_matches_engine_export(client, api_bundle_dir, api_result):
    from difflens.difficulty import project_2d

    body = client.get("/api/projection", params={"source": "pattern"}).json()
    check("projection", body)
    projection = project_2d(load_bundle(api_bundle_dir), api_result, "pattern")
    assert np.allclose(np.asarray(body["coords"]), projection.coords)
    r = client.get("/api/projection", params={"source": "layer:zzz"})
    assert r.status_code == 422
    check("error", r.json())


def test_patterns_counts(client, api_result):
    from difflens.difficulty import pattern_counts

    body = client.get("/api/patterns").json()
    check("patterns", body)
    assert body["counts"] == pattern_counts(api_result)
    assert sum(body["counts"].values()) == body["total"] == api_result.size


def test_patterns_taxonomy_bundle_all_codes(taxonomy_bundle_dir, tmp_path_factory):
    dst = tmp_path_factory.mktemp("api") / "taxonomy"
    shutil.copytree(taxonomy_bundle_dir, dst)
    app = create_app(dst, DifficultyConfig(k=3), IndexParams(mode="exact"), precompute=True)
    with TestClient(app) as c:
        body = c.get("/api/patterns").json()
    expected = {"1a": 1, "1b": 1, "2a": 1, "2b": 1, "3a": 1, "3b": 1, "4a": 1, "4b": 1,
                "5a": 2, "5b": 2, "6": 4, "unclassified": 0}
    assert body["counts"] == expected


def test_instances_sorting_and_paging(client, api_result):
    body = client.get(
        "/api/instances",
        params={"sort_key": "kdn:layer_2", "order": "desc", "page": 0, "page_size": 25},
    ).json()
    check("instances", body)
    assert body["total"] == api_result.size
    assert len(body["rows"]) == 25
    scores = [row["layer_kdn"][-1] for row in body["rows"]]
    assert scores == sorted(scores, reverse=True)
    # rows carry profile values verbatim
    for row in body["rows"][:5]:
        i = api_result.index_of[row["instance_id"]]
        assert row["data_kdn"] == float(api_result.data_kdn[i])
        assert row["pattern"] == api_result.patterns[i]

    page1 = client.get(
        "/api/instances",
        params={"sort_key": "kdn:layer_2", "order": "desc", "page": 1, "page_size": 25},
    ).json()
    assert [r["instance_id"] for r in page1["rows"]] != [r["instance_id"] for r in body["rows"]]

    r = client.get("/api/instances", params={"sort_key": "bogus"})
    assert r.status_code == 422


def test_instances_sort_is_stable(client):
    body = client.get(
        "/api/instances", params={"sort_key": "data_kdn", "page_size": 120}
    ).json()
    rows = body["rows"]
    for a, b in zip(rows, rows[1:]):
        if a["data_kdn"] == b["data_kdn"]:
            assert int(a["instance_id"].split("/")[1]) < int(b["instance_id"].split("/")[1])


def test_neighbors_donut_and_histogram(client, api_result):
    iid = api_result.ids[0]
    body = client.get("/api/neighbors", params={"instance_id": iid, "layer": "layer_1"}).json()
    check("neighbors", body)
    assert sum(body["class_counts"]) == body["k"] == 5
    distances = [n["distance"] for n in body["neighbors"]]
    assert distances == sorted(distances)
    hist_total = sum(map(sum, body["histogram"]["counts"]))
    assert hist_total == body["k"]
    assert body["histogram"]["max_distance"] >= max(distances)
    # ad-hoc k requery
    body9 = client.get(
        "/api/neighbors", params={"instance_id": iid, "layer": "layer_1", "k": 9}
    ).json()
    assert len(body9["neighbors"]) == 9

    r = client.get("/api/neighbors", params={"instance_id": "test/999999", "layer": "input"})
    assert r.status_code == 404
    r = client.get("/api/neighbors", params={"instance_id": iid, "layer": "nope"})
    assert r.status_code == 422


def test_neighbors_center_score_matches_profiles(client, api_result):
    for iid in api_result.ids[:10]:
        body = client.get("/api/neighbors", params={"instance_id": iid, "layer": "input"}).json()
        i = api_result.index_of[iid]
        assert body["center_score"] == float(api_result.layer_kdn[i][0])


def test_subsets_create_combine_roundtrip(client):
    a = client.post(
        "/api/subsets",
        json={"op": "create", "descriptor": {"kind": "pattern", "codes": ["1a"]}, "name": "easy"},
    ).json()
    b = client.post(
        "/api/subsets",
        json={"op": "create", "descriptor": {"kind": "confusion",
                                             "cells": [[c, c] for c in range(6)]}, "name": "correct"},
    ).json()
    check("subset_mutation", a)
    combined = client.post(
        "/api/subsets",
        json={"op": "combine", "a": a["subset"]["id"], "b": b["subset"]["id"],
              "set_op": "intersection", "name": "easy&correct"},
    ).json()
    check("subset_mutation", combined)
    assert set(combined["subset"]["members"]) == set(a["subset"]["members"]) & set(
        b["subset"]["members"]
    )
    listing = client.get("/api/subsets").json()
    check("subsets_list", listing)
    ids = {s["id"] for s in listing["subsets"]}
    assert {a["subset"]["id"], b["subset"]["id"], combined["subset"]["id"]} <= ids
    # GETs accept the subset everywhere
    flow = client.get("/api/flow", params={"subset": a["subset"]["id"]}).json()
    assert flow["n"] == a["subset"]["size"]

    saved = client.post("/api/subsets", json={"op": "save"}).json()
    check("subset_mutation", saved)
    assert saved["saved"] is True

    r = client.get("/api/summary", params={"subset": "s404"})
    assert r.status_code == 404
    check("error", r.json())


def test_mutations_bump_revision_and_compute_is_idempotent(client):
    before = client.get("/api/status").json()["revision"]
    again = client.post("/api/compute", json={}).json()
    check("compute", again)
    assert again["computed"] is False
    assert again["revision"] == before

    changed = client.post("/api/compute", json={"k": 7}).json()
    assert changed["computed"] is True
    assert changed["revision"] == before + 1
    assert client.get("/api/status").json()["config"]["k"] == 7
    # put the module fixture back
    restored = client.post("/api/compute", json={"k": 5}).json()
    assert restored["computed"] is True


def test_validation_error_shape(client):
    r = client.post("/api/subsets", json={"op": "create"})
    assert r.status_code == 422
    body = r.json()
    check("error", body)
    r = client.post("/api/compute", json={"k": "many"})
    assert r.status_code == 422
    assert r.json()["code"] == "validation-error"
    assert any("k" in d["path"] for d in r.json()["details"])


def test_every_get_is_deterministic_at_fixed_revision(client, api_result):
    iid = api_result.ids[3]
    endpoints = [
        ("/api/status", {}),
        ("/api/summary", {"pair": "data_model"}),
        ("/api/summary", {"pair": "model_human"}),
        ("/api/confusion", {}),
        ("/api/flow", {}),
        ("/api/pcp", {}),
        ("/api/projection", {"source": "pixel"}),
        ("/api/patterns", {}),
        ("/api/instances", {"sort_key": "data_kdn"}),
        ("/api/neighbors", {"instance_id": iid, "layer": "input"}),
        ("/api/subsets", {}),
    ]
    for path, params in endpoints:
        first = client.get(path, params=params)
        assert first.status_code == 200, path
        for _ in range(2):
            assert client.get(path, params=params).content == first.content, path


def test_image_endpoint_missing(client):
    r = client.get("/api/image", params={"instance_id": "test/0"})
    assert r.status_code == 404
    check("error", r.json())
