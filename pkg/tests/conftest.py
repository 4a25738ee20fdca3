"""Shared fixtures: synthetic bundles of different shapes plus computed results."""

from __future__ import annotations

from itertools import product
from pathlib import Path

import numpy as np
import pytest

from difflens.bundle import load_bundle, write_bundle
from difflens.difficulty import DifficultyConfig, IndexParams, run_pipeline
from difflens.synth import SynthSpec, synth_generate

SMALL_SPEC = SynthSpec(
    name="small",
    n_classes=6,
    n_train=300,
    n_test=120,
    input_dim=12,
    layer_dims=(8, 8, 8),
    n_late_separators=15,
    n_mislabeled=12,
    n_confusable=8,
    n_annotators=9,
    seed=11,
)

CLEAN_SPEC = SynthSpec(
    name="clean",
    n_classes=4,
    n_train=160,
    n_test=48,
    input_dim=10,
    layer_dims=(6, 6, 6),
    noise=0.3,
    n_late_separators=0,
    n_mislabeled=0,
    n_confusable=0,
    n_annotators=5,
    annotator_flip=0.0,
    seed=5,
)


@pytest.fixture(scope="session")
def small_bundle_dir(tmp_path_factory) -> Path:
    out = tmp_path_factory.mktemp("bundles") / "small"
    synth_generate(SMALL_SPEC, out)
    return out


@pytest.fixture(scope="session")
def small_bundle(small_bundle_dir):
    return load_bundle(small_bundle_dir)


@pytest.fixture(scope="session")
def small_result(small_bundle):
    return run_pipeline(small_bundle, DifficultyConfig(k=5), IndexParams(mode="exact"))


@pytest.fixture(scope="session")
def clean_bundle_dir(tmp_path_factory) -> Path:
    out = tmp_path_factory.mktemp("bundles") / "clean"
    synth_generate(CLEAN_SPEC, out)
    return out


@pytest.fixture(scope="session")
def clean_bundle(clean_bundle_dir):
    return load_bundle(clean_bundle_dir)


@pytest.fixture(scope="session")
def clean_result(clean_bundle):
    return run_pipeline(clean_bundle, DifficultyConfig(k=5), IndexParams(mode="exact"))


# ---------------------------------------------------------------------------
# taxonomy bundle: one test instance per (human, data, model, correct) combo


TAXONOMY_COMBOS = list(product((False, True), repeat=4))  # (human, data, model, correct)


def _taxonomy_trace(data_high: bool, model_high: bool, correct: bool) -> tuple[list[int], int]:
    """Probe placements and final prediction realizing one difficulty combo.

    Ground truth is class 0 and wrong predictions land on class 1; class 2 is
    a filler used to force deep alignment without touching data difficulty.
    """
    y, p = 0, 1
    final = y if correct else p
    key = (data_high, model_high, correct)
    traces = {
        (False, False, True): [y, y, y, y],  # depth 0
        (False, True, True): [y, 2, 2, y],  # depth 3
        (False, False, False): [y, p, p, p],  # depth 1 -> 1/3, low
        (False, True, False): [y, y, y, p],  # depth 3
        (True, False, True): [1, y, y, y],  # depth 1
        (True, True, True): [1, 1, 1, y],  # depth 3
        (True, False, False): [p, p, p, p],  # depth 0
        (True, True, False): [p, y, y, p],  # depth 3
    }
    return traces[key], final


def build_taxonomy_bundle(root: Path) -> dict:
    """Bundle whose 16 test instances realize every low/high/correctness combo.

    Returns the per-instance expectations keyed by instance id.
    """
    rng = np.random.default_rng(77)
    C, dims = 3, (6, 6, 6, 6)
    per_class = 20
    centers = [rng.standard_normal((C, d)) * 10.0 for d in dims]
    noise = 0.2

    train_labels = np.repeat(np.arange(C), per_class)
    train = {}
    probes = ["input", "layer_0", "layer_1", "layer_2"]
    for j, probe in enumerate(probes):
        train[probe] = (
            centers[j][train_labels] + rng.standard_normal((len(train_labels), dims[j])) * noise
        ).astype(np.float32)

    placements = []
    finals = []
    human_high_flags = []
    for human_high, data_high, model_high, correct in TAXONOMY_COMBOS:
        trace, final = _taxonomy_trace(data_high, model_high, correct)
        placements.append(trace)
        finals.append(final)
        human_high_flags.append(human_high)
    placements = np.asarray(placements)

    n_test = len(TAXONOMY_COMBOS)
    test = {}
    for j, probe in enumerate(probes):
        test[probe] = (
            centers[j][placements[:, j]] + rng.standard_normal((n_test, dims[j])) * noise
        ).astype(np.float32)

    test_labels = np.zeros(n_test, dtype=np.int64)  # ground truth is class 0 throughout
    predictions = np.asarray(finals, dtype=np.int64)
    annotations = []
    for i, high in enumerate(human_high_flags):
        votes = [1, 1, 1, 0] if high else [0, 0, 0, 0]  # 3/4 disagreement when high
        annotations.extend((i, f"a{j}", v) for j, v in enumerate(votes))

    write_bundle(
        root,
        dataset_name="taxonomy",
        class_names=["c0", "c1", "c2"],
        layer_names=probes[1:],
        train=train,
        test=test,
        train_labels=train_labels,
        test_labels=test_labels,
        predictions=predictions,
        annotations=annotations,
    )
    return {
        f"test/{i}": combo for i, combo in enumerate(TAXONOMY_COMBOS)
    }


@pytest.fixture(scope="session")
def taxonomy_bundle_dir(tmp_path_factory) -> Path:
    out = tmp_path_factory.mktemp("bundles") / "taxonomy"
    build_taxonomy_bundle(out)
    return out


@pytest.fixture(scope="session")
def taxonomy_combos(taxonomy_bundle_dir, tmp_path_factory) -> dict:
    # rebuild in a scratch dir purely to recover the combo table deterministically
    return build_taxonomy_bundle(tmp_path_factory.mktemp("bundles") / "taxonomy_combo")


@pytest.fixture(scope="session")
def taxonomy_result(taxonomy_bundle_dir):
    bundle = load_bundle(taxonomy_bundle_dir)
    return run_pipeline(bundle, DifficultyConfig(k=3), IndexParams(mode="exact"))
