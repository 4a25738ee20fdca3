"""On-disk dataset bundle: manifest, embedding matrices, and label/prediction tables.

A bundle directory contains:

* ``manifest.json`` -- UTF-8 JSON with keys ``dataset_name``, ``class_names``,
  ``layers`` (ordered hidden-layer names), ``n_train``, ``n_test``,
  ``has_annotations`` and ``files`` (logical name -> ``{"path": ..., "crc32": ...}``).
* one ``EMB1`` matrix file per split and probe space: logical names
  ``emb/<split>/input`` and ``emb/<split>/<layer>``.
* ``labels.csv`` (``instance_id,split,label``), ``predictions.csv``
  (``instance_id,predicted_label``), optionally ``annotations.csv``
  (``instance_id,annotator_id,label``) and ``images.csv`` (``instance_id,path``).

``EMB1`` format, bit-exact: magic bytes ``EMB1``, u32 little-endian row count,
u32 little-endian column count, then rows*cols IEEE-754 binary32 little-endian
values in row-major order, no padding.

Instance ids are ``train/<row>`` and ``test/<row>``, zero-based.
"""

from __future__ import annotations

import csv
import io
import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BundleError, MatrixFormatError

MANIFEST_NAME = "manifest.json"
MATRIX_MAGIC = b"EMB1"
INPUT_PROBE = "input"

_HEADERS = {
    "labels": ["instance_id", "split", "label"],
    "predictions": ["instance_id", "predicted_label"],
    "annotations": ["instance_id", "annotator_id", "label"],
    "images": ["instance_id", "path"],
}


def make_instance_id(split: str, row: int) -> str:
    return f"{split}/{row}"


def parse_instance_id(instance_id: str) -> tuple[str, int]:
    """Split an ``train/<row>`` / ``test/<row>`` id; raises ValueError if malformed."""
    split, _, row = instance_id.partition("/")
    if split not in ("train", "test") or not row.isdigit():
        raise ValueError(f"malformed instance id: {instance_id!r}")
    return split, int(row)


def instance_sort_key(instance_id: str) -> tuple[str, int]:
    """Canonical ordering for id lists: split (test before train), then row."""
    split, row = parse_instance_id(instance_id)
    return split, row


def file_crc32(path: Path) -> int:
    crc = 0
    with open(path, "rb") as fh:
        while chunk := fh.read(1 << 20):
            crc = zlib.crc32(chunk, crc)
    return crc & 0xFFFFFFFF


# ---------------------------------------------------------------------------
# EMB1 matrix files


def write_matrix(path: Path, values: np.ndarray) -> None:
    arr = np.ascontiguousarray(values, dtype="<f4")
    if arr.ndim != 2:
        raise MatrixFormatError(f"matrix must be 2-D, got shape {arr.shape}")
    with open(path, "wb") as fh:
        fh.write(MATRIX_MAGIC)
        fh.write(struct.pack("<II", arr.shape[0], arr.shape[1]))
        fh.write(arr.tobytes())


def read_matrix(path: Path) -> np.ndarray:
    """Read an EMB1 file into a read-only float32 array."""
    with open(path, "rb") as fh:
        header = fh.read(12)
        if len(header) < 12 or header[:4] != MATRIX_MAGIC:
            raise MatrixFormatError(f"{path.name}: not an EMB1 file")
        rows, cols = struct.unpack("<II", header[4:12])
        payload = fh.read()
    expected = 4 * rows * cols
    if len(payload) != expected:
        raise MatrixFormatError(
            f"{path.name}: declares {rows}x{cols} ({expected} bytes) but holds {len(payload)} bytes"
        )
    arr = np.frombuffer(payload, dtype="<f4").reshape(rows, cols)
    arr.flags.writeable = False
    return arr


# ---------------------------------------------------------------------------
# Manifest


@dataclass(frozen=True)
class Manifest:
    dataset_name: str
    class_names: tuple[str, ...]
    layer_names: tuple[str, ...]
    n_train: int
    n_test: int
    has_annotations: bool
    files: dict[str, dict]  # logical name -> {"path": str, "crc32": int}

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    @property
    def probe_names(self) -> tuple[str, ...]:
        """Probe spaces in network order: raw input first, then each hidden layer."""
        return (INPUT_PROBE,) + self.layer_names

    def to_dict(self) -> dict:
        return {
            "dataset_name": self.dataset_name,
            "class_names": list(self.class_names),
            "layers": list(self.layer_names),
            "n_train": self.n_train,
            "n_test": self.n_test,
            "has_annotations": self.has_annotations,
            "files": {k: dict(v) for k, v in sorted(self.files.items())},
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


def matrix_logical_name(split: str, probe: str) -> str:
    return f"emb/{split}/{probe}"


@dataclass(frozen=True)
class Violation:
    """One validation finding; ``message`` always names the offending file/offset."""

    code: str
    message: str
    file: str | None = None
    where: str | None = None


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def summary(self) -> str:
        if self.ok:
            return "ok"
        return "\n".join(v.message for v in self.violations)


@dataclass(frozen=True)
class EmbeddingBundle:
    """Immutable in-memory view of a loaded bundle; safe for concurrent readers."""

    root: Path
    manifest: Manifest
    train: dict[str, np.ndarray]  # probe name -> (n_train, d) float32
    test: dict[str, np.ndarray]  # probe name -> (n_test, d) float32
    train_labels: np.ndarray  # (n_train,) int64
    test_labels: np.ndarray  # (n_test,) int64
    predictions: np.ndarray  # (n_test,) int64
    annotations: dict[int, np.ndarray] = field(default_factory=dict)  # test row -> labels
    images: dict[str, str] = field(default_factory=dict)  # instance id -> relative path
    fingerprint: int = 0  # crc32 of manifest.json bytes; covers all file checksums

    @property
    def probe_names(self) -> tuple[str, ...]:
        return self.manifest.probe_names

    @property
    def n_probes(self) -> int:
        return len(self.probe_names)

    def matrix(self, split: str, probe: str) -> np.ndarray:
        return (self.train if split == "train" else self.test)[probe]

    def labels(self, split: str) -> np.ndarray:
        return self.train_labels if split == "train" else self.test_labels

    def image_path(self, instance_id: str) -> Path | None:
        rel = self.images.get(instance_id)
        return self.root / rel if rel is not None else None


# ---------------------------------------------------------------------------
# Validation / loading

_MANIFEST_KEYS = {
    "dataset_name",
    "class_names",
    "layers",
    "n_train",
    "n_test",
    "has_annotations",
    "files",
}


def _parse_manifest(root: Path, out: list[Violation]) -> Manifest | None:
    path = root / MANIFEST_NAME
    if not path.is_file():
        out.append(Violation("missing-file", f"{MANIFEST_NAME}: file not found", MANIFEST_NAME))
        return None
    try:
        raw = json.loads(path.read_text("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        out.append(Violation("manifest-invalid", f"{MANIFEST_NAME}: {exc}", MANIFEST_NAME))
        return None
    if not isinstance(raw, dict) or set(raw) != _MANIFEST_KEYS:
        out.append(
            Violation(
                "manifest-invalid",
                f"{MANIFEST_NAME}: expected exactly keys {sorted(_MANIFEST_KEYS)}",
                MANIFEST_NAME,
            )
        )
        return None

    problems = []
    if not isinstance(raw["dataset_name"], str):
        problems.append("dataset_name must be a string")
    classes = raw["class_names"]
    if not (isinstance(classes, list) and all(isinstance(c, str) for c in classes)):
        problems.append("class_names must be a list of strings")
    elif len(classes) < 2:
        problems.append("at least 2 class_names required")
    layers = raw["layers"]
    if not (isinstance(layers, list) and all(isinstance(n, str) for n in layers)):
        problems.append("layers must be a list of strings")
    else:
        if len(layers) < 1:
            problems.append("at least 1 layer required")
        if len(set(layers)) != len(layers):
            problems.append("layer names must be unique")
        if INPUT_PROBE in layers:
            problems.append(f"layer name {INPUT_PROBE!r} is reserved for the pixel space")
    for key in ("n_train", "n_test"):
        if not (isinstance(raw[key], int) and raw[key] >= 1):
            problems.append(f"{key} must be a positive integer")
    if not isinstance(raw["has_annotations"], bool):
        problems.append("has_annotations must be a boolean")
    files = raw["files"]
    if not isinstance(files, dict):
        problems.append("files must be an object")
    else:
        for name, entry in files.items():
            if (
                not isinstance(entry, dict)
                or not isinstance(entry.get("path"), str)
                or not isinstance(entry.get("crc32"), int)
            ):
                problems.append(f"files[{name!r}] must carry string path and integer crc32")
    if problems:
        for p in problems:
            out.append(Violation("manifest-invalid", f"{MANIFEST_NAME}: {p}", MANIFEST_NAME))
        return None
    return Manifest(
        dataset_name=raw["dataset_name"],
        class_names=tuple(classes),
        layer_names=tuple(layers),
        n_train=raw["n_train"],
        n_test=raw["n_test"],
        has_annotations=raw["has_annotations"],
        files={k: dict(v) for k, v in files.items()},
    )


def _expected_logical_files(manifest: Manifest) -> tuple[set[str], set[str]]:
    required = {
        matrix_logical_name(split, probe)
        for split in ("train", "test")
        for probe in manifest.probe_names
    }
    required.update({"labels", "predictions"})
    if manifest.has_annotations:
        required.add("annotations")
    optional = {"images"}
    if not manifest.has_annotations:
        optional.add("annotations")
    return required, optional


def _check_registry(root: Path, manifest: Manifest, out: list[Violation]) -> dict[str, Path]:
    """Verify registry completeness, file existence, containment and checksums."""
    required, optional = _expected_logical_files(manifest)
    registered = set(manifest.files)
    for missing in sorted(required - registered):
        out.append(
            Violation("missing-file", f"{MANIFEST_NAME}: logical file {missing!r} not registered", MANIFEST_NAME)
        )
    for unknown in sorted(registered - required - optional):
        out.append(
            Violation("unknown-file", f"{MANIFEST_NAME}: unknown logical file {unknown!r}", MANIFEST_NAME)
        )

    resolved: dict[str, Path] = {}
    for name in sorted(registered & (required | optional)):
        entry = manifest.files[name]
        rel = entry["path"]
        path = (root / rel).resolve()
        if not str(path).startswith(str(root.resolve()) + "/") and path != root.resolve():
            out.append(Violation("path-escape", f"{rel}: path escapes the bundle directory", rel))
            continue
        if not path.is_file():
            out.append(Violation("missing-file", f"{rel}: file not found", rel))
            continue
        crc = file_crc32(path)
        if crc != entry["crc32"]:
            out.append(
                Violation(
                    "checksum-mismatch",
                    f"{rel}: crc32 {crc} does not match manifest value {entry['crc32']}",
                    rel,
                )
            )
            continue
        resolved[name] = path
    return resolved


def _load_matrix(
    name: str, rel: str, path: Path, n_expected: int, out: list[Violation]
) -> np.ndarray | None:
    try:
        arr = read_matrix(path)
    except MatrixFormatError as exc:
        out.append(Violation("bad-matrix", str(exc), rel))
        return None
    if arr.shape[0] != n_expected:
        out.append(
            Violation(
                "dimension-mismatch",
                f"{rel}: {name} has {arr.shape[0]} rows, split declares {n_expected}",
                rel,
            )
        )
        return None
    finite = np.isfinite(arr)
    if not finite.all():
        r, c = np.argwhere(~finite)[0]
        out.append(
            Violation(
                "non-finite",
                f"{rel}: non-finite value at (row {r}, col {c})",
                rel,
                where=f"row {r}, col {c}",
            )
        )
        return None
    return arr


def _read_table(path: Path, kind: str, out: list[Violation]) -> list[tuple[int, list[str]]] | None:
    """Read a CSV table; returns (line_number, fields) rows or None on a header problem."""
    rel = path.name
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            out.append(Violation("bad-table", f"{rel}: empty file, expected header", rel))
            return None
        if header != _HEADERS[kind]:
            out.append(
                Violation(
                    "bad-table",
                    f"{rel}: header {header!r} does not match {_HEADERS[kind]!r}",
                    rel,
                )
            )
            return None
        return [(lineno, row) for lineno, row in enumerate(reader, start=2)]


def _parse_id(
    rel: str, lineno: int, token: str, manifest: Manifest, out: list[Violation]
) -> tuple[str, int] | None:
    try:
        split, row = parse_instance_id(token)
    except ValueError:
        out.append(
            Violation(
                "bad-table", f"{rel}: line {lineno}: malformed instance id {token!r}", rel, f"line {lineno}"
            )
        )
        return None
    limit = manifest.n_train if split == "train" else manifest.n_test
    if row >= limit:
        out.append(
            Violation(
                "dangling-reference",
                f"{rel}: line {lineno}: instance id {token!r} outside split of size {limit}",
                rel,
                f"line {lineno}",
            )
        )
        return None
    return split, row


def _parse_label(
    rel: str, lineno: int, token: str, n_classes: int, out: list[Violation]
) -> int | None:
    try:
        label = int(token)
    except ValueError:
        out.append(
            Violation("bad-table", f"{rel}: line {lineno}: label {token!r} is not an integer", rel, f"line {lineno}")
        )
        return None
    if not 0 <= label < n_classes:
        out.append(
            Violation(
                "class-out-of-range",
                f"{rel}: line {lineno}: class index {label} outside [0, {n_classes})",
                rel,
                f"line {lineno}",
            )
        )
        return None
    return label


def _scan(root: Path) -> tuple[list[Violation], EmbeddingBundle | None]:
    out: list[Violation] = []
    manifest = _parse_manifest(root, out)
    if manifest is None:
        return out, None
    resolved = _check_registry(root, manifest, out)

    train: dict[str, np.ndarray] = {}
    test: dict[str, np.ndarray] = {}
    for probe in manifest.probe_names:
        for split, dest, n in (("train", train, manifest.n_train), ("test", test, manifest.n_test)):
            name = matrix_logical_name(split, probe)
            if name not in resolved:
                continue
            arr = _load_matrix(name, manifest.files[name]["path"], resolved[name], n, out)
            if arr is not None:
                dest[probe] = arr
        if probe in train and probe in test and train[probe].shape[1] != test[probe].shape[1]:
            rel = manifest.files[matrix_logical_name("test", probe)]["path"]
            out.append(
                Violation(
                    "dimension-mismatch",
                    f"{rel}: test matrix for {probe!r} has {test[probe].shape[1]} cols, train has {train[probe].shape[1]}",
                    rel,
                )
            )

    C = manifest.n_classes
    train_labels = np.full(manifest.n_train, -1, dtype=np.int64)
    test_labels = np.full(manifest.n_test, -1, dtype=np.int64)
    if "labels" in resolved:
        rel = manifest.files["labels"]["path"]
        rows = _read_table(resolved["labels"], "labels", out)
        for lineno, fields in rows or []:
            if len(fields) != 3:
                out.append(Violation("bad-table", f"{rel}: line {lineno}: expected 3 fields", rel, f"line {lineno}"))
                continue
            parsed = _parse_id(rel, lineno, fields[0], manifest, out)
            label = _parse_label(rel, lineno, fields[2], C, out)
            if parsed is None or label is None:
                continue
            split, row = parsed
            if fields[1] != split:
                out.append(
                    Violation(
                        "bad-table",
                        f"{rel}: line {lineno}: split column {fields[1]!r} disagrees with id {fields[0]!r}",
                        rel,
                        f"line {lineno}",
                    )
                )
                continue
            dest = train_labels if split == "train" else test_labels
            if dest[row] != -1:
                out.append(
                    Violation(
                        "duplicate-row",
                        f"{rel}: line {lineno}: duplicate label for {fields[0]}",
                        rel,
                        f"line {lineno}",
                    )
                )
            dest[row] = label
        if rows is not None:
            for split, arr in (("train", train_labels), ("test", test_labels)):
                missing = np.flatnonzero(arr == -1)
                if missing.size:
                    out.append(
                        Violation(
                            "missing-label",
                            f"{rel}: no label for {make_instance_id(split, int(missing[0]))}"
                            + (f" and {missing.size - 1} more" if missing.size > 1 else ""),
                            rel,
                        )
                    )

    predictions = np.full(manifest.n_test, -1, dtype=np.int64)
    if "predictions" in resolved:
        rel = manifest.files["predictions"]["path"]
        rows = _read_table(resolved["predictions"], "predictions", out)
        for lineno, fields in rows or []:
            if len(fields) != 2:
                out.append(Violation("bad-table", f"{rel}: line {lineno}: expected 2 fields", rel, f"line {lineno}"))
                continue
            parsed = _parse_id(rel, lineno, fields[0], manifest, out)
            label = _parse_label(rel, lineno, fields[1], C, out)
            if parsed is None or label is None:
                continue
            split, row = parsed
            if split != "test":
                out.append(
                    Violation(
                        "dangling-reference",
                        f"{rel}: line {lineno}: prediction for non-test instance {fields[0]}",
                        rel,
                        f"line {lineno}",
                    )
                )
                continue
            if predictions[row] != -1:
                out.append(
                    Violation(
                        "duplicate-row",
                        f"{rel}: line {lineno}: duplicate prediction for {fields[0]}",
                        rel,
                        f"line {lineno}",
                    )
                )
            predictions[row] = label
        if rows is not None:
            missing = np.flatnonzero(predictions == -1)
            if missing.size:
                out.append(
                    Violation(
                        "missing-prediction",
                        f"{rel}: no prediction for {make_instance_id('test', int(missing[0]))}"
                        + (f" and {missing.size - 1} more" if missing.size > 1 else ""),
                        rel,
                    )
                )

    annotations: dict[int, list[int]] = {}
    if "annotations" in resolved:
        rel = manifest.files["annotations"]["path"]
        rows = _read_table(resolved["annotations"], "annotations", out)
        seen: set[tuple[int, str]] = set()
        for lineno, fields in rows or []:
            if len(fields) != 3:
                out.append(Violation("bad-table", f"{rel}: line {lineno}: expected 3 fields", rel, f"line {lineno}"))
                continue
            parsed = _parse_id(rel, lineno, fields[0], manifest, out)
            label = _parse_label(rel, lineno, fields[2], C, out)
            if parsed is None or label is None:
                continue
            split, row = parsed
            if split != "test":
                out.append(
                    Violation(
                        "dangling-reference",
                        f"{rel}: line {lineno}: annotation references non-test instance {fields[0]}",
                        rel,
                        f"line {lineno}",
                    )
                )
                continue
            key = (row, fields[1])
            if key in seen:
                out.append(
                    Violation(
                        "duplicate-row",
                        f"{rel}: line {lineno}: duplicate annotation ({fields[0]}, {fields[1]})",
                        rel,
                        f"line {lineno}",
                    )
                )
                continue
            seen.add(key)
            annotations.setdefault(row, []).append(label)

    images: dict[str, str] = {}
    if "images" in resolved:
        rel = manifest.files["images"]["path"]
        rows = _read_table(resolved["images"], "images", out)
        root_resolved = root.resolve()
        for lineno, fields in rows or []:
            if len(fields) != 2:
                out.append(Violation("bad-table", f"{rel}: line {lineno}: expected 2 fields", rel, f"line {lineno}"))
                continue
            parsed = _parse_id(rel, lineno, fields[0], manifest, out)
            if parsed is None:
                continue
            target = (root / fields[1]).resolve()
            if not str(target).startswith(str(root_resolved) + "/"):
                out.append(
                    Violation(
                        "path-escape",
                        f"{rel}: line {lineno}: image path {fields[1]!r} escapes the bundle directory",
                        rel,
                        f"line {lineno}",
                    )
                )
                continue
            if not target.is_file():
                out.append(
                    Violation(
                        "missing-file",
                        f"{rel}: line {lineno}: image file {fields[1]!r} not found",
                        rel,
                        f"line {lineno}",
                    )
                )
                continue
            images[fields[0]] = fields[1]

    if out:
        return out, None

    bundle = EmbeddingBundle(
        root=root,
        manifest=manifest,
        train=train,
        test=test,
        train_labels=_readonly(train_labels),
        test_labels=_readonly(test_labels),
        predictions=_readonly(predictions),
        annotations={row: _readonly(np.asarray(v, dtype=np.int64)) for row, v in annotations.items()},
        images=images,
        fingerprint=file_crc32(root / MANIFEST_NAME),
    )
    return out, bundle


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


def validate_bundle(path: str | Path) -> ValidationReport:
    """List every content violation in the bundle at ``path``; never raises on content."""
    violations, _ = _scan(Path(path))
    return ValidationReport(tuple(violations))


def load_bundle(path: str | Path) -> EmbeddingBundle:
    """Load and fully validate a bundle; raises BundleError listing all violations."""
    violations, bundle = _scan(Path(path))
    if bundle is None:
        raise BundleError(violations)
    return bundle


# ---------------------------------------------------------------------------
# Writing (used by the synthetic generator and by exporters/tests)


def write_bundle(
    root: str | Path,
    dataset_name: str,
    class_names: list[str],
    layer_names: list[str],
    train: dict[str, np.ndarray],
    test: dict[str, np.ndarray],
    train_labels: np.ndarray,
    test_labels: np.ndarray,
    predictions: np.ndarray,
    annotations: list[tuple[int, str, int]] | None = None,
    images: dict[str, str] | None = None,
) -> Manifest:
    """Write a complete bundle directory; returns the manifest.

    ``annotations`` rows are (test_row, annotator_id, label). Output is a pure
    function of the arguments: files are written deterministically so identical
    inputs produce byte-identical bundles.
    """
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    files: dict[str, dict] = {}

    def register(name: str, rel: str) -> None:
        files[name] = {"path": rel, "crc32": file_crc32(root / rel)}

    probe_names = [INPUT_PROBE] + list(layer_names)
    for split, matrices in (("train", train), ("test", test)):
        for probe in probe_names:
            rel = f"{split}_{probe}.emb"
            write_matrix(root / rel, matrices[probe])
            register(matrix_logical_name(split, probe), rel)

    def write_csv(rel: str, header: list[str], rows) -> None:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
        (root / rel).write_text(buf.getvalue(), encoding="utf-8")

    write_csv(
        "labels.csv",
        _HEADERS["labels"],
        [("train/%d" % i, "train", int(v)) for i, v in enumerate(train_labels)]
        + [("test/%d" % i, "test", int(v)) for i, v in enumerate(test_labels)],
    )
    register("labels", "labels.csv")

    write_csv(
        "predictions.csv",
        _HEADERS["predictions"],
        [("test/%d" % i, int(v)) for i, v in enumerate(predictions)],
    )
    register("predictions", "predictions.csv")

    if annotations is not None:
        write_csv(
            "annotations.csv",
            _HEADERS["annotations"],
            [("test/%d" % row, annotator, int(label)) for row, annotator, label in annotations],
        )
        register("annotations", "annotations.csv")

    if images:
        write_csv("images.csv", _HEADERS["images"], sorted(images.items()))
        register("images", "images.csv")

    manifest = Manifest(
        dataset_name=dataset_name,
        class_names=tuple(class_names),
        layer_names=tuple(layer_names),
        n_train=int(next(iter(train.values())).shape[0]),
        n_test=int(next(iter(test.values())).shape[0]),
        has_annotations=annotations is not None,
        files=files,
    )
    (root / MANIFEST_NAME).write_text(manifest.dumps(), encoding="utf-8")
    return manifest
