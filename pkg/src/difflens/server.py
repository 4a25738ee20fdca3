"""HTTP JSON API over a single loaded bundle.

All GET endpoints are pure with respect to the session revision: identical
revision + query yields byte-identical responses. Mutations (compute, subset
operations) are serialized by a lock and bump the revision; derived-data
endpoints answer 409 until a compute has completed. Errors use the shape
``{"code": ..., "message": ..., "details": ...}``.
"""

from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Any

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import FileResponse, JSONResponse
from pydantic import BaseModel

from .bundle import EmbeddingBundle, load_bundle, parse_instance_id
from .difficulty import (
    ComputeResult,
    DifficultyConfig,
    IndexParams,
    ProbeSpace,
    build_spaces,
    compute_profiles,
    pattern_counts,
    project_2d,
)
from .errors import DiffLensError
from .flow import FlowGraph, build_flow, flow_to_json, pcp_data
from .knn import knn_predict_labels
from .pca import Projection2D
from .subsets import (
    PAIRS,
    SET_OPS,
    SelectionContext,
    SubsetStore,
    perspective_bins,
    perspective_values,
)

SUBSETS_FILENAME = "subsets.json"
HISTOGRAM_BINS = 10  # neighbor-distance histogram resolution


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str, details: Any = None):
        self.status = status
        self.code = code
        self.message = message
        self.details = details
        super().__init__(message)


def _config_hash(config: DifficultyConfig, params: IndexParams) -> str:
    blob = json.dumps([asdict(config), asdict(params)], sort_keys=True, default=list)
    return hashlib.sha1(blob.encode()).hexdigest()


@dataclass
class ComputedState:
    """Everything derived from one (config, params) run; replaced atomically."""

    result: ComputeResult
    spaces: dict[str, ProbeSpace]
    config_hash: str
    projections: dict[str, Projection2D]
    flows: dict[tuple[str, ...], FlowGraph]


class Session:
    """One bundle, one mutable analysis state, one subset store."""

    def __init__(
        self,
        bundle: EmbeddingBundle,
        config: DifficultyConfig | None = None,
        params: IndexParams | None = None,
    ):
        self.bundle = bundle
        self.config = config or DifficultyConfig()
        self.params = params or IndexParams()
        self.state: ComputedState | None = None
        self.revision = 0
        self.lock = threading.Lock()
        self.store = SubsetStore.load(
            Path(bundle.root) / SUBSETS_FILENAME, bundle.fingerprint
        )

    def compute(
        self, config: DifficultyConfig | None = None, params: IndexParams | None = None
    ) -> bool:
        """Run the pipeline; no-op (and no revision bump) for an unchanged config."""
        with self.lock:
            config = config or self.config
            params = params or self.params
            digest = _config_hash(config, params)
            if self.state is not None and self.state.config_hash == digest:
                return False
            spaces = build_spaces(self.bundle, config, params)
            result = compute_profiles(self.bundle, spaces, config)
            result = replace(result, params=params)
            self.state = ComputedState(
                result=result, spaces=spaces, config_hash=digest, projections={}, flows={}
            )
            self.config = config
            self.params = params
            self.revision += 1
            return True

    # -- derived data ------------------------------------------------------

    def ready(self) -> ComputedState:
        state = self.state
        if state is None:
            raise ApiError(409, "not_computed", "profiles not computed yet; POST /api/compute first")
        return state

    def projection(self, source: str) -> Projection2D:
        state = self.ready()
        if source not in state.projections:
            with self.lock:
                if source not in state.projections:
                    state.projections[source] = project_2d(self.bundle, state.result, source)
        return state.projections[source]

    def flow(self, subset_ids: tuple[str, ...]) -> FlowGraph:
        state = self.ready()
        if subset_ids not in state.flows:
            graph = build_flow(state.result, subset_ids)
            with self.lock:
                state.flows[subset_ids] = graph
        return state.flows[subset_ids]

    def selection_context(self) -> SelectionContext:
        state = self.ready()
        return SelectionContext(
            result=state.result,
            project=self.projection,
            flow=lambda ids: self.flow(tuple(ids)),
            resolve_subset=lambda sid: self.store.get(sid).members,
        )

    def resolve_subset(self, subset: str | None) -> tuple[np.ndarray, tuple[str, ...]]:
        """Subset query param -> (profile indices, member ids); None/'all' is everything."""
        result = self.ready().result
        if subset is None or subset == "all":
            return np.arange(result.size), result.ids
        try:
            members = self.store.get(subset).members
        except DiffLensError as exc:
            raise ApiError(404, "unknown-subset", str(exc)) from exc
        index_of = result.index_of
        known = [iid for iid in members if iid in index_of]
        return np.asarray([index_of[iid] for iid in known], dtype=np.int64), tuple(known)


class SubsetRequest(BaseModel):
    op: str
    name: str | None = None
    descriptor: dict | None = None
    a: str | None = None
    b: str | None = None
    set_op: str | None = None


class ComputeRequest(BaseModel):
    k: int | None = None
    layer_kdn_reference: str | None = None
    data_kdn_reference: str | None = None
    threshold_mode: str | None = None
    theta_data: float | None = None
    theta_model: float | None = None
    theta_human: float | None = None
    quantile: float | None = None
    zscore: bool | None = None
    profile_train: bool | None = None
    mode: str | None = None
    trees: int | None = None
    leaf_size: int | None = None
    seed: int | None = None


def _apply_overrides(session: Session, req: ComputeRequest) -> tuple[DifficultyConfig, IndexParams]:
    config_fields = {
        name: value
        for name, value in req.model_dump().items()
        if value is not None
        and name in DifficultyConfig.__dataclass_fields__
    }
    if req.profile_train is not None:
        config_fields["profile_splits"] = ("test", "train") if req.profile_train else ("test",)
    param_fields = {
        name: value
        for name, value in {
            "mode": req.mode,
            "trees": req.trees,
            "leaf_size": req.leaf_size,
            "seed": req.seed,
        }.items()
        if value is not None
    }
    return replace(session.config, **config_fields), replace(session.params, **param_fields)


def create_app(
    bundle: EmbeddingBundle | str | Path,
    config: DifficultyConfig | None = None,
    params: IndexParams | None = None,
    precompute: bool = False,
    frontend_dir: str | Path | None = None,
) -> FastAPI:
    if not isinstance(bundle, EmbeddingBundle):
        bundle = load_bundle(bundle)
    session = Session(bundle, config, params)
    if precompute:
        session.compute()

    app = FastAPI(title="difflens", docs_url=None, redoc_url=None)
    app.state.session = session
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    @app.exception_handler(ApiError)
    async def _api_error(_: Request, exc: ApiError) -> JSONResponse:
        return JSONResponse(
            status_code=exc.status,
            content={"code": exc.code, "message": exc.message, "details": exc.details},
        )

    @app.exception_handler(DiffLensError)
    async def _engine_error(_: Request, exc: DiffLensError) -> JSONResponse:
        return JSONResponse(
            status_code=422,
            content={"code": type(exc).__name__.lower().removesuffix("_"), "message": str(exc), "details": None},
        )

    @app.exception_handler(RequestValidationError)
    async def _validation_error(_: Request, exc: RequestValidationError) -> JSONResponse:
        details = [
            {"path": ".".join(str(p) for p in err["loc"]), "message": err["msg"]}
            for err in exc.errors()
        ]
        return JSONResponse(
            status_code=422,
            content={"code": "validation-error", "message": "invalid request", "details": details},
        )

    # -- read endpoints ------------------------------------------------------

    @app.get("/api/status")
    def status() -> dict:
        body = {
            "state": "ready" if session.state is not None else "not_computed",
            "revision": session.revision,
            "dataset_name": bundle.manifest.dataset_name,
            "class_names": list(bundle.manifest.class_names),
            "layers": list(bundle.manifest.layer_names),
            "probes": list(bundle.probe_names),
            "n_train": bundle.manifest.n_train,
            "n_test": bundle.manifest.n_test,
            "has_annotations": bundle.manifest.has_annotations,
            "store_stale": session.store.stale,
        }
        if session.state is not None:
            result = session.state.result
            present = ~np.isnan(result.human)
            body.update(
                {
                    "n_profiled": result.size,
                    "config": asdict(result.config),
                    "index_params": asdict(result.params),
                    "thresholds": result.thresholds,
                    "accuracy": float(result.correct.mean()),
                    "mean_data_kdn": float(result.data_kdn.mean()),
                    "mean_model_difficulty": float(result.model_difficulty.mean()),
                    "mean_human_difficulty": (
                        float(result.human[present].mean()) if present.any() else None
                    ),
                }
            )
        return body

    @app.get("/api/summary")
    def summary(pair: str = "data_model", subset: str | None = None, bins: int = 10) -> dict:
        if pair not in PAIRS:
            raise ApiError(422, "unknown-pair", f"unknown perspective pair {pair!r}")
        if bins < 1:
            raise ApiError(422, "bad-bins", "bins must be >= 1")
        result = session.ready().result
        rows, _ = session.resolve_subset(subset)
        px, py = PAIRS[pair]
        nx, ix, present_x = perspective_bins(result, px, bins)
        ny, iy, present_y = perspective_bins(result, py, bins)
        valid = rows[present_x[rows] & present_y[rows]]
        counts = np.zeros((nx, ny), dtype=np.int64)
        np.add.at(counts, (ix[valid], iy[valid]), 1)
        return {
            "revision": session.revision,
            "pair": pair,
            "x": {"perspective": px, "bins": nx},
            "y": {"perspective": py, "bins": ny},
            "counts": counts.tolist(),
            "x_marginal": counts.sum(axis=1).tolist(),
            "y_marginal": counts.sum(axis=0).tolist(),
            "total": int(valid.size),
            "excluded": int(rows.size - valid.size),
            "subset_size": int(rows.size),
        }

    @app.get("/api/confusion")
    def confusion(subset: str | None = None) -> dict:
        result = session.ready().result
        rows, _ = session.resolve_subset(subset)
        C = result.n_classes
        counts = np.zeros((C, C), dtype=np.int64)
        np.add.at(counts, (result.actual[rows], result.predicted[rows]), 1)
        return {
            "revision": session.revision,
            "class_names": list(bundle.manifest.class_names),
            "counts": counts.tolist(),
            "total": int(rows.size),
            "correct": int(np.trace(counts)),
        }

    @app.get("/api/flow")
    def flow(subset: str | None = None) -> dict:
        _, ids = session.resolve_subset(subset)
        graph = session.flow(ids)
        body = flow_to_json(graph)
        body["revision"] = session.revision
        return body

    @app.get("/api/pcp")
    def pcp(subset: str | None = None) -> dict:
        result = session.ready().result
        _, ids = session.resolve_subset(subset)
        axes = pcp_data(result, ids)
        return {
            "revision": session.revision,
            "axes": list(axes.axes),
            "ids": list(axes.ids),
            "values": axes.values.tolist(),
        }

    @app.get("/api/projection")
    def projection(source: str = "pixel", subset: str | None = None) -> dict:
        session.ready()
        try:
            proj = session.projection(source)
        except DiffLensError as exc:
            raise ApiError(422, "unknown-source", str(exc)) from exc
        rows, ids = session.resolve_subset(subset)
        return {
            "revision": session.revision,
            "source": source,
            "ids": list(ids),
            "coords": proj.coords[rows].tolist(),
            "explained_variance": proj.model.explained_variance.tolist(),
        }

    @app.get("/api/patterns")
    def patterns(subset: str | None = None) -> dict:
        result = session.ready().result
        rows, _ = session.resolve_subset(subset)
        return {
            "revision": session.revision,
            "counts": pattern_counts(result, rows),
            "total": int(rows.size),
            "thresholds": result.thresholds,
        }

    @app.get("/api/instances")
    def instances(
        subset: str | None = None,
        sort_key: str = "instance_id",
        order: str = "asc",
        page: int = 0,
        page_size: int = 50,
    ) -> dict:
        result = session.ready().result
        rows, _ = session.resolve_subset(subset)
        if order not in ("asc", "desc"):
            raise ApiError(422, "bad-order", "order must be 'asc' or 'desc'")
        if page < 0 or page_size < 1:
            raise ApiError(422, "bad-page", "page must be >= 0 and page_size >= 1")

        def sort_values(key: str) -> np.ndarray | None:
            plain = {
                "instance_id": None,  # canonical order, no key needed
                "data_kdn": result.data_kdn,
                "model_difficulty": result.model_difficulty,
                "human_difficulty": result.human,
                "pd": result.pd,
            }
            if key in plain:
                return plain[key]
            probe, _, name = key.partition(":")
            if probe == "kdn" and name in result.probe_names:
                return result.layer_kdn[:, result.probe_names.index(name)]
            raise ApiError(422, "bad-sort-key", f"unknown sort key {key!r}")

        values = sort_values(sort_key)
        ordered = rows.copy()
        if values is not None:
            v = values[ordered].astype(np.float64)
            missing = np.isnan(v)
            v = np.where(missing, 0.0, v)
            if order == "desc":
                v = -v
            # stable: value, then canonical position; rows without a value go last
            ordered = ordered[np.lexsort((ordered, v, missing))]
        elif order == "desc":
            ordered = ordered[::-1]

        start = page * page_size
        chunk = ordered[start : start + page_size]
        out_rows = []
        for i in chunk:
            h = result.human[i]
            iid = result.ids[i]
            out_rows.append(
                {
                    "instance_id": iid,
                    "actual": int(result.actual[i]),
                    "predicted": int(result.predicted[i]),
                    "correct": bool(result.correct[i]),
                    "data_kdn": float(result.data_kdn[i]),
                    "layer_kdn": [float(x) for x in result.layer_kdn[i]],
                    "pd": int(result.pd[i]),
                    "model_difficulty": float(result.model_difficulty[i]),
                    "human_difficulty": None if np.isnan(h) else float(h),
                    "pattern": result.patterns[i],
                    "never_aligned": bool(result.never_aligned[i]),
                    "trace": [int(t) for t in result.traces[i]],
                    "image": bundle.images.get(iid),
                }
            )
        return {
            "revision": session.revision,
            "total": int(rows.size),
            "page": page,
            "page_size": page_size,
            "sort_key": sort_key,
            "order": order,
            "rows": out_rows,
        }

    @app.get("/api/neighbors")
    def neighbors(instance_id: str, layer: str = "input", k: int | None = None, subset: str | None = None) -> dict:
        state = session.ready()
        result = state.result
        if layer not in result.probe_names:
            raise ApiError(422, "unknown-layer", f"unknown probe space {layer!r}")
        index_of = result.index_of
        if instance_id not in index_of:
            raise ApiError(404, "unknown-instance", f"{instance_id!r} is not a profiled instance")
        i = index_of[instance_id]
        rows_sel, _ = session.resolve_subset(subset)

        if k is None or k == result.config.k:
            k = result.config.k
            nbr_rows = state.result.neighbor_rows[layer][i]
            nbr_dists = state.result.neighbor_dists[layer][i]
        else:
            space = state.spaces[layer]
            split, row = parse_instance_id(instance_id)
            vector = space.transform(bundle.matrix(split, layer)[row : row + 1])[0]
            try:
                nbr_rows, nbr_dists = space.index.query(vector, k)
            except DiffLensError as exc:
                raise ApiError(422, "bad-k", str(exc)) from exc

        labels = bundle.train_labels[nbr_rows]
        C = result.n_classes
        class_counts = np.bincount(labels, minlength=C)

        # histogram scale: the subset's largest stored neighbor distance at this probe
        subset_max = float(result.neighbor_dists[layer][rows_sel].max()) if rows_sel.size else 0.0
        counts = np.zeros((HISTOGRAM_BINS, C), dtype=np.int64)
        if subset_max > 0:
            idx = np.minimum(
                (nbr_dists / subset_max * HISTOGRAM_BINS).astype(np.int64), HISTOGRAM_BINS - 1
            )
        else:
            idx = np.zeros(len(nbr_rows), dtype=np.int64)
        np.add.at(counts, (idx, labels), 1)

        return {
            "revision": session.revision,
            "instance_id": instance_id,
            "layer": layer,
            "k": int(k),
            "center_score": float(result.layer_kdn[i][result.probe_names.index(layer)]),
            "probe_prediction": int(knn_predict_labels(labels)),
            "class_counts": class_counts.tolist(),
            "neighbors": [
                {
                    "row": int(r),
                    "instance_id": f"train/{int(r)}",
                    "label": int(lab),
                    "distance": float(d),
                    "image": bundle.images.get(f"train/{int(r)}"),
                }
                for r, d, lab in zip(nbr_rows, nbr_dists, labels)
            ],
            "histogram": {
                "bins": HISTOGRAM_BINS,
                "max_distance": subset_max,
                "counts": counts.tolist(),
            },
        }

    @app.get("/api/subsets")
    def list_subsets() -> dict:
        profiled = set(session.state.result.ids) if session.state is not None else None
        entries = []
        for s in session.store.list():
            size = len([m for m in s.members if m in profiled]) if profiled is not None else s.size
            entries.append(
                {
                    "id": s.id,
                    "name": s.name,
                    "size": size,
                    "provenance": s.provenance,
                    "created_at": s.created_at,
                }
            )
        return {"revision": session.revision, "subsets": entries}

    @app.get("/api/image")
    def image(instance_id: str):
        path = bundle.image_path(instance_id)
        if path is None or not path.is_file():
            raise ApiError(404, "no-image", f"no image registered for {instance_id!r}")
        return FileResponse(path)

    # -- mutations -----------------------------------------------------------

    @app.post("/api/subsets")
    def mutate_subsets(req: SubsetRequest) -> dict:
        store = session.store
        if req.op == "create":
            if not req.descriptor:
                raise ApiError(422, "validation-error", "create needs a descriptor", [{"path": "descriptor"}])
            ctx = session.selection_context()
            with session.lock:
                subset = store.create_from_selection(req.descriptor, ctx, name=req.name)
                session.revision += 1
            return {
                "revision": session.revision,
                "subset": {"id": subset.id, "name": subset.name, "size": subset.size, "members": list(subset.members)},
            }
        if req.op == "combine":
            if not (req.a and req.b and req.set_op):
                raise ApiError(422, "validation-error", "combine needs a, b and set_op", [{"path": "set_op"}])
            if req.set_op not in SET_OPS:
                raise ApiError(422, "validation-error", f"set_op must be one of {SET_OPS}", [{"path": "set_op"}])
            with session.lock:
                subset = store.combine(req.a, req.b, req.set_op, name=req.name)
                session.revision += 1
            return {
                "revision": session.revision,
                "subset": {"id": subset.id, "name": subset.name, "size": subset.size, "members": list(subset.members)},
            }
        if req.op == "save":
            with session.lock:
                store_revision = store.save()
                session.revision += 1
            return {"revision": session.revision, "saved": True, "store_revision": store_revision}
        raise ApiError(422, "validation-error", f"unknown op {req.op!r}", [{"path": "op"}])

    @app.post("/api/compute")
    def compute(req: ComputeRequest) -> dict:
        config, index_params = _apply_overrides(session, req)
        try:
            ran = session.compute(config, index_params)
        except DiffLensError as exc:
            raise ApiError(422, "bad-config", str(exc)) from exc
        return {
            "revision": session.revision,
            "computed": ran,
            "config": asdict(session.config),
            "index_params": asdict(session.params),
        }

    if frontend_dir is not None and Path(frontend_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(frontend_dir), html=True), name="frontend")

    return app
