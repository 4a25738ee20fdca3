"""Deterministic synthetic bundle generator with planted difficulty ground truth.

Test instances are planted in four kinds:

* ``clean``            -- sits at its own class center in every probe space;
                          predicted correctly. Expected: kDN ~ 0, depth 0.
* ``late_separator``   -- sits at a decoy class center at the input and every
                          layer but the last, where it moves to its own center;
                          predicted correctly. Expected: depth = last probe.
* ``mislabeled``       -- sits at one class's centers everywhere but carries a
                          different ground-truth label; predicted as the class
                          it resembles. Expected: pixel kDN >= 0.8, incorrect.
* ``confusable``       -- pixel space at its own center, every hidden layer at
                          a decoy center; predicted as the decoy. Expected:
                          low pixel kDN, shallow depth, incorrect.

The generator is a pure function of spec + seed: two runs emit byte-identical
bundles. Alongside the bundle it writes ``expectations.json`` recording the
planted ids and the properties the pipeline is expected to recover.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bundle import Manifest, write_bundle
from .errors import SynthSpecError

EXPECTATIONS_NAME = "expectations.json"


@dataclass(frozen=True)
class SynthSpec:
    name: str = "synthetic"
    n_classes: int = 10
    n_train: int = 2000
    n_test: int = 500
    input_dim: int = 32
    layer_dims: tuple[int, ...] = (16, 16, 16)
    separation: float = 8.0
    noise: float = 0.5
    n_late_separators: int = 50
    n_mislabeled: int = 50
    n_confusable: int = 24
    n_annotators: int = 51
    annotator_flip: float = 0.05
    seed: int = 0
    # optional explicit per-probe centers: probe name -> (n_classes, dim) values
    centers: dict[str, list] | None = field(default=None, hash=False)

    @property
    def layer_names(self) -> tuple[str, ...]:
        return tuple(f"layer_{i}" for i in range(len(self.layer_dims)))

    @property
    def probe_dims(self) -> tuple[int, ...]:
        return (self.input_dim,) + tuple(self.layer_dims)

    @classmethod
    def from_json(cls, path: str | Path) -> "SynthSpec":
        raw = json.loads(Path(path).read_text("utf-8"))
        known = set(cls.__dataclass_fields__)
        unknown = set(raw) - known
        if unknown:
            raise SynthSpecError(f"unknown spec fields: {sorted(unknown)}")
        if "layer_dims" in raw:
            raw["layer_dims"] = tuple(raw["layer_dims"])
        return cls(**raw)

    def validate(self) -> None:
        if self.n_classes < 2:
            raise SynthSpecError("need at least 2 classes")
        if self.n_classes > self.n_train:
            raise SynthSpecError(
                f"n_classes={self.n_classes} exceeds n_train={self.n_train}: every class needs a training instance"
            )
        if self.n_test < 1 or self.n_train < 1:
            raise SynthSpecError("splits must be nonempty")
        if len(self.layer_dims) < 1:
            raise SynthSpecError("need at least one hidden layer")
        if min(self.probe_dims) < 1:
            raise SynthSpecError("probe dimensions must be positive")
        planted = self.n_late_separators + self.n_mislabeled + self.n_confusable
        if planted > self.n_test:
            raise SynthSpecError(f"{planted} planted instances exceed n_test={self.n_test}")
        if self.noise < 0 or self.separation <= 0:
            raise SynthSpecError("noise must be >= 0 and separation > 0")
        if not 0.0 <= self.annotator_flip <= 1.0:
            raise SynthSpecError("annotator_flip must be in [0, 1]")
        if self.centers is not None:
            expected = {p: d for p, d in zip(("input",) + self.layer_names, self.probe_dims)}
            for probe, dim in expected.items():
                arr = np.asarray(self.centers.get(probe, []), dtype=np.float64)
                if arr.shape != (self.n_classes, dim):
                    raise SynthSpecError(
                        f"centers[{probe!r}] must have shape ({self.n_classes}, {dim}), got {arr.shape}"
                    )


KIND_CLEAN = "clean"
KIND_LATE = "late_separator"
KIND_MISLABELED = "mislabeled"
KIND_CONFUSABLE = "confusable"

EXPECTED_PATTERNS = {
    KIND_CLEAN: "1a",
    KIND_LATE: "4a",
    KIND_MISLABELED: "5b",
    KIND_CONFUSABLE: "1b",
}


def synth_generate(spec: SynthSpec, out_dir: str | Path) -> tuple[Manifest, dict]:
    """Write a valid bundle plus its expectations sidecar; returns (manifest, expectations)."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    C = spec.n_classes
    probes = ("input",) + spec.layer_names
    n_probes = len(probes)
    last = n_probes - 1  # probe index of the deepest layer

    if spec.centers is not None:
        centers = [np.asarray(spec.centers[p], dtype=np.float64) for p in probes]
    else:
        centers = [rng.standard_normal((C, d)) * spec.separation for d in spec.probe_dims]

    # training split: balanced labels, every instance at its own class centers
    reps = -(-spec.n_train // C)
    train_labels = rng.permutation(np.tile(np.arange(C), reps)[: spec.n_train])
    train = {
        probe: (centers[j][train_labels] + rng.standard_normal((spec.n_train, d)) * spec.noise).astype(
            np.float32
        )
        for j, (probe, d) in enumerate(zip(probes, spec.probe_dims))
    }

    # test split: planted kind blocks, then one shared permutation over rows
    n_clean = spec.n_test - spec.n_late_separators - spec.n_mislabeled - spec.n_confusable
    kinds = np.array(
        [KIND_CLEAN] * n_clean
        + [KIND_LATE] * spec.n_late_separators
        + [KIND_MISLABELED] * spec.n_mislabeled
        + [KIND_CONFUSABLE] * spec.n_confusable
    )
    kinds = kinds[rng.permutation(spec.n_test)]
    geometry = rng.integers(0, C, spec.n_test)  # the class each instance resembles
    decoy = (geometry + 1) % C

    test_labels = geometry.copy()
    predictions = geometry.copy()
    is_late = kinds == KIND_LATE
    is_mis = kinds == KIND_MISLABELED
    is_conf = kinds == KIND_CONFUSABLE
    test_labels[is_mis] = decoy[is_mis]  # stored ground truth is wrong for these
    predictions[is_conf] = decoy[is_conf]

    # placement[j][i] = class whose center instance i occupies in probe space j
    placement = np.tile(geometry, (n_probes, 1))
    for j in range(n_probes):
        if j < last:
            placement[j][is_late] = decoy[is_late]
        if j > 0:
            placement[j][is_conf] = decoy[is_conf]

    test = {
        probe: (
            centers[j][placement[j]] + rng.standard_normal((spec.n_test, d)) * spec.noise
        ).astype(np.float32)
        for j, (probe, d) in enumerate(zip(probes, spec.probe_dims))
    }

    annotations = None
    if spec.n_annotators > 0:
        base = test_labels.copy()
        base[is_mis] = geometry[is_mis]  # annotators label what the instance resembles
        flips = rng.random((spec.n_test, spec.n_annotators)) < spec.annotator_flip
        offsets = rng.integers(1, C, (spec.n_test, spec.n_annotators))
        votes = np.where(flips, (base[:, None] + offsets) % C, base[:, None])
        annotations = [
            (row, f"a{j}", int(votes[row, j]))
            for row in range(spec.n_test)
            for j in range(spec.n_annotators)
        ]

    out_dir = Path(out_dir)
    manifest = write_bundle(
        out_dir,
        dataset_name=spec.name,
        class_names=[f"class_{c}" for c in range(C)],
        layer_names=list(spec.layer_names),
        train=train,
        test=test,
        train_labels=train_labels,
        test_labels=test_labels,
        predictions=predictions,
        annotations=annotations,
    )

    ids_by_kind = {
        kind: [f"test/{i}" for i in np.flatnonzero(kinds == kind)]
        for kind in (KIND_CLEAN, KIND_LATE, KIND_MISLABELED, KIND_CONFUSABLE)
    }
    n_wrong = int(is_mis.sum() + is_conf.sum())
    expectations = {
        "seed": spec.seed,
        "n_test": spec.n_test,
        "accuracy": 1.0 - n_wrong / spec.n_test,
        "kinds": ids_by_kind,
        "late_separator_pd": last,
        "mislabeled_min_data_kdn": 0.8,
        "clean_max_mean_data_kdn": 0.05,
        "expected_patterns": EXPECTED_PATTERNS,
        "all_easy": bool(n_wrong == 0 and not is_late.any()),
    }
    (out_dir / EXPECTATIONS_NAME).write_text(
        json.dumps(expectations, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    return manifest, expectations


def load_expectations(bundle_dir: str | Path) -> dict:
    return json.loads((Path(bundle_dir) / EXPECTATIONS_NAME).read_text("utf-8"))
