"""PCA via SVD of the centered data matrix, plus the 2-D projection sources.

Components follow a deterministic sign convention: the entry of largest
magnitude in each component is nonnegative. Explained variances use the
sample covariance (n - 1 denominator), matching a dense eigendecomposition
of ``np.cov``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PcaError

# probe spaces wider than this are compressed before k-NN indexing
KNN_COMPRESSION_THRESHOLD = 128

SOURCE_PIXELS = "pixel"
SOURCE_PATTERN = "pattern"


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray  # (d,)
    components: np.ndarray  # (p, d), orthonormal rows
    explained_variance: np.ndarray  # (p,), nonincreasing
    fitted_on: str = ""
    degenerate: bool = False  # all-equal rows: components defined, variances zero

    @property
    def p(self) -> int:
        return self.components.shape[0]


def pca_fit(matrix: np.ndarray, p: int, fitted_on: str = "") -> PcaModel:
    x = np.asarray(matrix, dtype=np.float64)
    if x.ndim != 2:
        raise PcaError(f"expected a 2-D matrix, got shape {x.shape}")
    rows, cols = x.shape
    if rows < 2:
        raise PcaError(f"need at least 2 rows to fit, got {rows}")
    if not 1 <= p <= min(rows, cols):
        raise PcaError(f"p={p} outside [1, {min(rows, cols)}]")
    mean = x.mean(axis=0)
    centered = x - mean
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    components = vt[:p].copy()
    variance = (s[:p] ** 2) / (rows - 1)
    for row in components:
        lead = np.argmax(np.abs(row))
        if row[lead] < 0:
            row *= -1.0
    degenerate = not np.any(variance > 0.0)
    return PcaModel(
        mean=mean,
        components=components,
        explained_variance=variance,
        fitted_on=fitted_on,
        degenerate=degenerate,
    )


def pca_transform(model: PcaModel, matrix: np.ndarray) -> np.ndarray:
    x = np.asarray(matrix, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.mean.shape[0]:
        raise PcaError(f"matrix shape {x.shape} does not match model dim {model.mean.shape[0]}")
    return (x - model.mean) @ model.components.T


def pca_inverse(model: PcaModel, reduced: np.ndarray) -> np.ndarray:
    z = np.asarray(reduced, dtype=np.float64)
    if z.ndim != 2 or z.shape[1] != model.p:
        raise PcaError(f"reduced shape {z.shape} does not match model p {model.p}")
    return z @ model.components + model.mean


@dataclass(frozen=True)
class Projection2D:
    source: str  # "pixel", "layer:<name>", or "pattern"
    ids: tuple[str, ...]
    coords: np.ndarray  # (len(ids), 2)
    model: PcaModel


def parse_source(source: str, layer_names: tuple[str, ...]) -> tuple[str, str | None]:
    """Normalize a projection source string; returns (kind, layer or None)."""
    if source == SOURCE_PIXELS:
        return SOURCE_PIXELS, None
    if source == SOURCE_PATTERN:
        return SOURCE_PATTERN, None
    kind, _, layer = source.partition(":")
    if kind == "layer" and layer in layer_names:
        return "layer", layer
    raise PcaError(f"unknown projection source {source!r}")


def project_rows(train_matrix: np.ndarray, target_matrix: np.ndarray, fitted_on: str) -> tuple[np.ndarray, PcaModel]:
    """Fit 2-D PCA on the training matrix and place the target rows in it.

    Fitting on train only keeps test geometry out of the projection basis.
    """
    p = min(2, min(train_matrix.shape))
    model = pca_fit(train_matrix, p, fitted_on=fitted_on)
    coords = pca_transform(model, target_matrix)
    if coords.shape[1] < 2:  # 1-D fallback when the source has a single column
        coords = np.hstack([coords, np.zeros((coords.shape[0], 2 - coords.shape[1]))])
    return coords, model
