"""Per-instance difficulty from three perspectives, plus the taxonomy pattern.

* data: disagreement between an instance's pixel-space training neighborhood
  and a reference label (ground truth by default).
* model: prediction depth -- the earliest probe from which every subsequent
  k-NN probe prediction equals the classifier's final prediction, scaled to
  [0, 1] by the number of hidden layers.
* human: fraction of annotator labels that disagree with the ground truth;
  absent (never zero) when an instance has no annotations.

Probes sit at the raw input and after each exported hidden layer, so an
L-layer bundle carries L + 1 probes indexed 0..L.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, replace

import numpy as np

from .bundle import EmbeddingBundle, make_instance_id
from .errors import ProfileError
from .knn import ProbeIndex, build_index, knn_predict_labels
from .pca import KNN_COMPRESSION_THRESHOLD, PcaModel, pca_fit, pca_transform
from .pca import Projection2D, project_rows, parse_source, SOURCE_PATTERN, SOURCE_PIXELS

PATTERN_CODES = ("1a", "1b", "2a", "2b", "3a", "3b", "4a", "4b", "5a", "5b", "6")
UNCLASSIFIED = "unclassified"


@dataclass(frozen=True)
class DifficultyConfig:
    k: int = 10
    layer_kdn_reference: str = "final-prediction"  # or "ground-truth"
    data_kdn_reference: str = "ground-truth"  # or "final-prediction"
    threshold_mode: str = "fixed"  # or "quantile"
    theta_data: float = 0.5
    theta_model: float = 0.5
    theta_human: float = 0.5
    quantile: float = 0.7
    profile_splits: tuple[str, ...] = ("test",)
    zscore: bool = False  # per-layer standardization before k-NN (off by default)

    def validate(self) -> None:
        if self.k < 1:
            raise ProfileError(f"k must be >= 1, got {self.k}")
        for name in ("layer_kdn_reference", "data_kdn_reference"):
            if getattr(self, name) not in ("final-prediction", "ground-truth"):
                raise ProfileError(f"{name} must be 'final-prediction' or 'ground-truth'")
        if self.threshold_mode not in ("fixed", "quantile"):
            raise ProfileError("threshold_mode must be 'fixed' or 'quantile'")
        for name in ("theta_data", "theta_model", "theta_human"):
            if not 0.0 < getattr(self, name) < 1.0:
                raise ProfileError(f"{name} must lie in (0, 1)")
        if not 0.0 < self.quantile < 1.0:
            raise ProfileError("quantile must lie in (0, 1)")
        if not self.profile_splits or any(s not in ("test", "train") for s in self.profile_splits):
            raise ProfileError("profile_splits must name 'test' and/or 'train'")


@dataclass(frozen=True)
class IndexParams:
    mode: str = "approximate"  # or "exact"
    trees: int = 16
    leaf_size: int = 32
    seed: int = 0


@dataclass(frozen=True)
class ProbeTrace:
    instance_id: str
    predictions: tuple[int, ...]  # probe predictions, input first, length L+1
    final_prediction: int


@dataclass(frozen=True)
class DifficultyProfile:
    instance_id: str
    data_kdn: float
    layer_kdn: tuple[float, ...]  # length L+1, input probe first
    prediction_depth: int
    model_difficulty: float
    human_difficulty: float | None
    correct: bool
    pattern: str
    never_aligned: bool = False


# ---------------------------------------------------------------------------
# scalar measures


def kdn_score(neighbor_labels: np.ndarray, reference_label: int) -> float:
    """Fraction of the k neighborhood whose label differs from the reference."""
    labels = np.asarray(neighbor_labels)
    if labels.size == 0:
        raise ProfileError("kdn_score needs a nonempty neighborhood")
    return float(np.count_nonzero(labels != reference_label)) / labels.size


def prediction_depth(trace: tuple[int, ...] | list[int], final_prediction: int) -> tuple[int, bool]:
    """Smallest probe index from which every prediction equals the final one.

    Returns (depth, never_aligned). A trace whose deepest probe still differs
    from the final prediction gets depth L with the never_aligned flag set,
    keeping the [0, L] range.
    """
    if len(trace) == 0:
        raise ProfileError("empty probe trace")
    deepest = len(trace) - 1
    for d in range(deepest + 1):
        if all(t == final_prediction for t in trace[d:]):
            return d, False
    return deepest, True


def human_difficulty(annotation_labels: np.ndarray | None, ground_truth: int) -> float | None:
    """Disagreement rate of annotations vs ground truth; None when unannotated."""
    if annotation_labels is None:
        return None
    labels = np.asarray(annotation_labels)
    if labels.size == 0:
        return None
    return float(np.count_nonzero(labels != ground_truth)) / labels.size


def assign_pattern(
    human_high: bool | None, data_high: bool, model_high: bool, correct: bool
) -> str:
    """Taxonomy code for one low/high/correctness combination.

    Rows 5a/5b ignore model difficulty and row 6 ignores both model difficulty
    and correctness; instances without a human value are unclassified.
    """
    if human_high is None:
        return UNCLASSIFIED
    if human_high:
        if data_high:
            return "5a" if correct else "5b"
        return "6"
    index = {(False, False): "1", (True, False): "2", (False, True): "3", (True, True): "4"}
    return index[(data_high, model_high)] + ("a" if correct else "b")


# ---------------------------------------------------------------------------
# probe spaces (optional compression / standardization in front of k-NN)


@dataclass(frozen=True)
class ProbeSpace:
    probe: str
    index: ProbeIndex
    mean: np.ndarray | None  # z-score statistics, None when disabled
    std: np.ndarray | None
    pca: PcaModel | None  # compression model, None when the space is narrow

    def transform(self, matrix: np.ndarray) -> np.ndarray:
        x = np.asarray(matrix, dtype=np.float64)
        if self.mean is not None:
            x = (x - self.mean) / self.std
        if self.pca is not None:
            x = pca_transform(self.pca, x)
        return x


def build_spaces(
    bundle: EmbeddingBundle,
    config: DifficultyConfig,
    params: IndexParams,
    cache_dir: str | None = None,
) -> dict[str, ProbeSpace]:
    """One nearest-neighbor index per probe space, over (possibly compressed) train rows.

    With ``cache_dir`` set, approximate indices are persisted per probe and
    reused while the bundle fingerprint and index parameters stay unchanged.
    """
    from pathlib import Path

    from .knn import RpForestIndex

    spaces: dict[str, ProbeSpace] = {}
    for probe in bundle.probe_names:
        train = np.asarray(bundle.train[probe], dtype=np.float64)
        mean = std = None
        if config.zscore:
            mean = train.mean(axis=0)
            std = train.std(axis=0)
            std = np.where(std > 0, std, 1.0)
            train = (train - mean) / std
        model = None
        if train.shape[1] > KNN_COMPRESSION_THRESHOLD:
            p = min(KNN_COMPRESSION_THRESHOLD, train.shape[0], train.shape[1])
            model = pca_fit(train, p, fitted_on=f"train:{probe}")
            train = pca_transform(model, train)

        index = None
        cache_path = None
        if params.mode == "approximate" and cache_dir:
            key = (
                f"{bundle.fingerprint:08x}_{probe}_t{params.trees}"
                f"_m{params.leaf_size}_s{params.seed}_z{int(config.zscore)}.npz"
            )
            cache_path = Path(cache_dir) / key
            index = RpForestIndex.load(
                cache_path,
                bundle.fingerprint,
                probe,
                trees=params.trees,
                leaf_size=params.leaf_size,
                seed=params.seed,
            )
        if index is None:
            index = build_index(
                train,
                probe,
                mode=params.mode,
                trees=params.trees,
                leaf_size=params.leaf_size,
                seed=params.seed,
            )
            if cache_path is not None:
                cache_path.parent.mkdir(parents=True, exist_ok=True)
                index.save(cache_path, bundle.fingerprint)
        spaces[probe] = ProbeSpace(probe=probe, index=index, mean=mean, std=std, pca=model)
    return spaces


# ---------------------------------------------------------------------------
# the full profile table


@dataclass(frozen=True)
class ComputeResult:
    """Columnar profile table plus the neighbor evidence computed along the way."""

    config: DifficultyConfig
    params: IndexParams
    ids: tuple[str, ...]
    probe_names: tuple[str, ...]
    n_classes: int
    actual: np.ndarray  # (m,) ground-truth labels
    predicted: np.ndarray  # (m,) final predictions (ground truth for train rows)
    data_kdn: np.ndarray  # (m,)
    layer_kdn: np.ndarray  # (m, L+1)
    pd: np.ndarray  # (m,)
    model_difficulty: np.ndarray  # (m,)
    human: np.ndarray  # (m,), NaN where absent
    correct: np.ndarray  # (m,) bool
    never_aligned: np.ndarray  # (m,) bool
    patterns: tuple[str, ...]
    traces: np.ndarray  # (m, L+1) probe predictions
    neighbor_rows: dict[str, np.ndarray]  # probe -> (m, k)
    neighbor_dists: dict[str, np.ndarray]  # probe -> (m, k)
    thresholds: dict[str, float | None]
    fingerprint: int

    @property
    def size(self) -> int:
        return len(self.ids)

    @property
    def index_of(self) -> dict[str, int]:
        return {iid: i for i, iid in enumerate(self.ids)}

    def profile(self, i: int) -> DifficultyProfile:
        h = self.human[i]
        return DifficultyProfile(
            instance_id=self.ids[i],
            data_kdn=float(self.data_kdn[i]),
            layer_kdn=tuple(float(v) for v in self.layer_kdn[i]),
            prediction_depth=int(self.pd[i]),
            model_difficulty=float(self.model_difficulty[i]),
            human_difficulty=None if np.isnan(h) else float(h),
            correct=bool(self.correct[i]),
            pattern=self.patterns[i],
            never_aligned=bool(self.never_aligned[i]),
        )

    def trace(self, i: int) -> ProbeTrace:
        return ProbeTrace(
            instance_id=self.ids[i],
            predictions=tuple(int(v) for v in self.traces[i]),
            final_prediction=int(self.predicted[i]),
        )

    def profiles(self) -> list[DifficultyProfile]:
        return [self.profile(i) for i in range(self.size)]


def _query_probe(
    space: ProbeSpace, bundle: EmbeddingBundle, split: str, rows: np.ndarray, k: int
) -> tuple[np.ndarray, np.ndarray]:
    """Neighbor rows/distances for one split in one probe space (self excluded on train)."""
    queries = space.transform(bundle.matrix(split, space.probe)[rows])
    if split == "test":
        return space.index.query_batch(queries, k)
    if k + 1 > space.index.n:
        raise ProfileError(
            f"k={k} leaves no neighbors for train-split profiling over {space.index.n} rows"
        )
    raw_rows, raw_dists = space.index.query_batch(queries, k + 1)
    out_rows = np.empty((rows.shape[0], k), dtype=np.int64)
    out_dists = np.empty((rows.shape[0], k), dtype=np.float64)
    for i, own in enumerate(rows):
        keep = raw_rows[i] != own
        keep[keep.cumsum() > k] = False  # own row absent: drop the extra tail neighbor
        out_rows[i] = raw_rows[i][keep][:k]
        out_dists[i] = raw_dists[i][keep][:k]
    return out_rows, out_dists


def _resolve_thresholds(
    config: DifficultyConfig, data: np.ndarray, model: np.ndarray, human: np.ndarray
) -> tuple[dict[str, float | None], np.ndarray, np.ndarray, np.ndarray]:
    """Low/high booleans per perspective; fixed mode is >= theta, quantile mode is > q-quantile."""
    present = ~np.isnan(human)
    if config.threshold_mode == "fixed":
        td, tm, th = config.theta_data, config.theta_model, config.theta_human
        data_high = data >= td
        model_high = model >= tm
        human_high = np.where(present, human >= th, False)
    else:
        td = float(np.quantile(data, config.quantile))
        tm = float(np.quantile(model, config.quantile))
        th = float(np.quantile(human[present], config.quantile)) if present.any() else None
        data_high = data > td
        model_high = model > tm
        human_high = np.where(present, human > (th if th is not None else np.inf), False)
    thresholds = {"mode": config.threshold_mode, "data": td, "model": tm, "human": th}
    return thresholds, data_high, model_high, human_high


def compute_profiles(
    bundle: EmbeddingBundle,
    spaces: dict[str, ProbeSpace],
    config: DifficultyConfig,
) -> ComputeResult:
    """Profile every instance of the configured splits against the built probe indices."""
    config.validate()
    probes = bundle.probe_names
    if set(spaces) != set(probes):
        raise ProfileError(f"indices built for {sorted(spaces)}, bundle has probes {sorted(probes)}")
    n_layers = len(probes) - 1

    members: list[tuple[str, int]] = []
    for split in config.profile_splits:
        count = bundle.manifest.n_test if split == "test" else bundle.manifest.n_train
        members.extend((split, row) for row in range(count))
    ids = tuple(make_instance_id(split, row) for split, row in members)
    m = len(members)

    actual = np.empty(m, dtype=np.int64)
    predicted = np.empty(m, dtype=np.int64)
    for i, (split, row) in enumerate(members):
        actual[i] = bundle.labels(split)[row]
        if split == "test":
            if bundle.predictions[row] < 0:
                raise ProfileError(f"missing prediction for {ids[i]}")
            predicted[i] = bundle.predictions[row]
        else:
            predicted[i] = actual[i]  # train rows carry no classifier prediction

    neighbor_rows: dict[str, np.ndarray] = {}
    neighbor_dists: dict[str, np.ndarray] = {}
    for probe in probes:
        rows_acc = []
        dists_acc = []
        for split in config.profile_splits:
            count = bundle.manifest.n_test if split == "test" else bundle.manifest.n_train
            r, d = _query_probe(spaces[probe], bundle, split, np.arange(count), config.k)
            rows_acc.append(r)
            dists_acc.append(d)
        neighbor_rows[probe] = np.vstack(rows_acc)
        neighbor_dists[probe] = np.vstack(dists_acc)

    # probe predictions (the trace) and per-probe disagreement scores
    traces = np.empty((m, n_layers + 1), dtype=np.int64)
    layer_kdn = np.empty((m, n_layers + 1), dtype=np.float64)
    layer_ref = predicted if config.layer_kdn_reference == "final-prediction" else actual
    data_ref = actual if config.data_kdn_reference == "ground-truth" else predicted
    for j, probe in enumerate(probes):
        labels = bundle.train_labels[neighbor_rows[probe]]  # (m, k)
        traces[:, j] = [knn_predict_labels(labels[i]) for i in range(m)]
        layer_kdn[:, j] = (labels != layer_ref[:, None]).mean(axis=1)
    data_kdn = (bundle.train_labels[neighbor_rows[probes[0]]] != data_ref[:, None]).mean(axis=1)

    pd_arr = np.empty(m, dtype=np.int64)
    never = np.empty(m, dtype=bool)
    for i in range(m):
        pd_arr[i], never[i] = prediction_depth(traces[i].tolist(), int(predicted[i]))
    model_difficulty = pd_arr / n_layers

    human = np.full(m, np.nan)
    for i, (split, row) in enumerate(members):
        if split == "test":
            value = human_difficulty(bundle.annotations.get(row), int(actual[i]))
            if value is not None:
                human[i] = value

    correct = predicted == actual
    thresholds, data_high, model_high, human_high = _resolve_thresholds(
        config, data_kdn, model_difficulty, human
    )
    present = ~np.isnan(human)
    patterns = tuple(
        assign_pattern(
            bool(human_high[i]) if present[i] else None,
            bool(data_high[i]),
            bool(model_high[i]),
            bool(correct[i]),
        )
        for i in range(m)
    )

    return ComputeResult(
        config=config,
        params=IndexParams(),  # overwritten by run_pipeline when params differ
        ids=ids,
        probe_names=probes,
        n_classes=bundle.manifest.n_classes,
        actual=actual,
        predicted=predicted,
        data_kdn=data_kdn,
        layer_kdn=layer_kdn,
        pd=pd_arr,
        model_difficulty=model_difficulty,
        human=human,
        correct=correct,
        never_aligned=never,
        patterns=patterns,
        traces=traces,
        neighbor_rows=neighbor_rows,
        neighbor_dists=neighbor_dists,
        thresholds=thresholds,
        fingerprint=bundle.fingerprint,
    )


def run_pipeline(
    bundle: EmbeddingBundle,
    config: DifficultyConfig | None = None,
    params: IndexParams | None = None,
) -> ComputeResult:
    """Build indices and compute the full profile table in one call."""
    config = config or DifficultyConfig()
    params = params or IndexParams()
    config.validate()
    spaces = build_spaces(bundle, config, params)
    result = compute_profiles(bundle, spaces, config)
    return replace(result, params=params)


# ---------------------------------------------------------------------------
# projections over profiled instances


def project_2d(bundle: EmbeddingBundle, result: ComputeResult, source: str) -> Projection2D:
    """2-D PCA of the chosen feature source over all profiled instances.

    Matrix sources fit on the training split and place profiled rows into that
    basis; the difficulty-pattern source has no training analogue, so it fits
    on the profiled pattern vectors themselves.
    """
    kind, layer = parse_source(source, bundle.manifest.layer_names)
    if kind == SOURCE_PATTERN:
        patterns = result.layer_kdn
        if not np.any(patterns.std(axis=0) > 0):
            coords = np.zeros((result.size, 2))
            model = pca_fit(patterns, min(2, patterns.shape[1]), fitted_on="pattern")
        else:
            coords, model = project_rows(patterns, patterns, fitted_on="pattern")
        return Projection2D(source=source, ids=result.ids, coords=coords, model=model)

    probe = "input" if kind == SOURCE_PIXELS else layer
    split_rows: dict[str, list[int]] = {"train": [], "test": []}
    order: list[tuple[str, int]] = []
    from .bundle import parse_instance_id

    for iid in result.ids:
        split, row = parse_instance_id(iid)
        split_rows[split].append(row)
        order.append((split, row))
    gathered = {
        split: bundle.matrix(split, probe)[rows] if rows else None
        for split, rows in split_rows.items()
    }
    target = np.empty((result.size, bundle.train[probe].shape[1]), dtype=np.float64)
    cursors = {"train": 0, "test": 0}
    for i, (split, _) in enumerate(order):
        target[i] = gathered[split][cursors[split]]
        cursors[split] += 1
    coords, model = project_rows(
        np.asarray(bundle.train[probe], dtype=np.float64), target, fitted_on=f"train:{probe}"
    )
    return Projection2D(source=source, ids=result.ids, coords=coords, model=model)


# ---------------------------------------------------------------------------
# exports and tallies


def profile_csv_header(probe_names: tuple[str, ...]) -> list[str]:
    kdn_cols = [f"kdn_L{j}" for j in range(len(probe_names))]
    return (
        ["instance_id", "data_kdn"]
        + kdn_cols
        + ["pd", "model_difficulty", "human_difficulty", "correct", "pattern", "never_aligned"]
    )


def export_profiles_csv(result: ComputeResult) -> str:
    """Profiles as CSV; floats use repr so exported values round-trip exactly."""
    buf = io.StringIO()
    buf.write(",".join(profile_csv_header(result.probe_names)) + "\n")
    for i in range(result.size):
        h = result.human[i]
        fields = (
            [result.ids[i], repr(float(result.data_kdn[i]))]
            + [repr(float(v)) for v in result.layer_kdn[i]]
            + [
                str(int(result.pd[i])),
                repr(float(result.model_difficulty[i])),
                "" if np.isnan(h) else repr(float(h)),
                "true" if result.correct[i] else "false",
                result.patterns[i],
                "true" if result.never_aligned[i] else "false",
            ]
        )
        buf.write(",".join(fields) + "\n")
    return buf.getvalue()


def pattern_counts(result: ComputeResult, indices: np.ndarray | None = None) -> dict[str, int]:
    which = range(result.size) if indices is None else indices
    counts = {code: 0 for code in PATTERN_CODES}
    counts[UNCLASSIFIED] = 0
    for i in which:
        counts[result.patterns[i]] += 1
    return counts
