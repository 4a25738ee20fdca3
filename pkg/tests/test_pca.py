"""PCA tests: eigendecomposition oracle, sign convention, projections."""

from __future__ import annotations

import numpy as np
import pytest

from difflens.difficulty import DifficultyConfig, IndexParams, project_2d, run_pipeline
from difflens.errors import PcaError
from difflens.knn import ExactIndex, knn_predict
from difflens.pca import pca_fit, pca_inverse, pca_transform, project_rows


def eig_oracle(matrix: np.ndarray, p: int) -> tuple[np.ndarray, np.ndarray]:
    """Dense covariance eigendecomposition, top-p by eigenvalue."""
    cov = np.cov(np.asarray(matrix, dtype=np.float64).T, ddof=1)
    cov = np.atleast_2d(cov)
    values, vectors = np.linalg.eigh(cov)
    order = np.argsort(values)[::-1][:p]
    return values[order], vectors[:, order].T


@pytest.mark.parametrize("shape,seed", [((4, 3), 0), ((30, 7), 1), ((200, 50), 2), ((50, 12), 3)])
def test_fit_matches_eigendecomposition_oracle(shape, seed):
    rng = np.random.default_rng(seed)
    data = rng.standard_normal(shape) @ np.diag(rng.uniform(0.5, 3.0, shape[1]))
    p = min(shape) - 1
    model = pca_fit(data, p)
    values, vectors = eig_oracle(data, p)
    assert np.allclose(model.explained_variance, values, atol=1e-6)
    # components match up to sign
    dots = np.abs(np.einsum("ij,ij->i", model.components, vectors))
    assert np.allclose(dots, 1.0, atol=1e-6)


def test_orthonormality_and_ordering():
    rng = np.random.default_rng(4)
    for _ in range(5):
        data = rng.standard_normal((40, 9))
        model = pca_fit(data, 6)
        gram = model.components @ model.components.T
        assert np.allclose(gram, np.eye(6), atol=1e-6)
        assert np.all(np.diff(model.explained_variance) <= 0)
        assert np.all(model.explained_variance >= 0)


def test_sign_convention_largest_entry_nonnegative():
    rng = np.random.default_rng(9)
    model = pca_fit(rng.standard_normal((30, 6)), 4)
    for row in model.components:
        assert row[np.argmax(np.abs(row))] >= 0


def test_line_y_equals_x():
    t = np.linspace(-2, 2, 21)
    data = np.stack([t, t], axis=1)
    model = pca_fit(data, 2)
    assert np.allclose(model.components[0], [1 / np.sqrt(2), 1 / np.sqrt(2)], atol=1e-9)
    assert model.explained_variance[1] == pytest.approx(0.0, abs=1e-12)


def test_full_rank_reconstruction():
    rng = np.random.default_rng(12)
    data = rng.standard_normal((25, 6))
    model = pca_fit(data, 6)
    back = pca_inverse(model, pca_transform(model, data))
    assert np.abs(back - data).max() < 1e-4


def test_transform_of_mean_is_zero():
    rng = np.random.default_rng(13)
    data = rng.standard_normal((20, 5))
    model = pca_fit(data, 3)
    assert np.allclose(pca_transform(model, data.mean(axis=0, keepdims=True)), 0.0, atol=1e-9)


def test_transformed_variance_equals_explained():
    rng = np.random.default_rng(14)
    data = rng.standard_normal((60, 8))
    model = pca_fit(data, 5)
    reduced = pca_transform(model, data)
    assert np.allclose(reduced.var(axis=0, ddof=1), model.explained_variance, atol=1e-4)


def test_transform_empty_rows():
    model = pca_fit(np.random.default_rng(0).standard_normal((10, 4)), 2)
    out = pca_transform(model, np.empty((0, 4)))
    assert out.shape == (0, 2)


def test_transform_is_affine():
    rng = np.random.default_rng(15)
    model = pca_fit(rng.standard_normal((30, 6)), 3)
    x, y = rng.standard_normal((2, 6))
    for alpha in (0.0, 0.25, 0.5, 0.9, 1.0):
        blend = alpha * x + (1 - alpha) * y
        lhs = pca_transform(model, blend[None])
        rhs = alpha * pca_transform(model, x[None]) + (1 - alpha) * pca_transform(model, y[None])
        assert np.allclose(lhs, rhs, atol=1e-5)


def test_degenerate_all_equal_rows_flagged():
    data = np.ones((8, 4))
    model = pca_fit(data, 2)
    assert model.degenerate
    assert np.allclose(model.explained_variance, 0.0)
    assert model.components.shape == (2, 4)


def test_fit_validation_errors():
    data = np.zeros((5, 3))
    with pytest.raises(PcaError, match="outside"):
        pca_fit(data, 4)
    with pytest.raises(PcaError, match="outside"):
        pca_fit(data, 0)
    with pytest.raises(PcaError, match="at least 2 rows"):
        pca_fit(np.zeros((1, 3)), 1)
    model = pca_fit(np.random.default_rng(0).standard_normal((6, 3)), 2)
    with pytest.raises(PcaError, match="does not match"):
        pca_transform(model, np.zeros((2, 5)))
    with pytest.raises(PcaError, match="does not match"):
        pca_inverse(model, np.zeros((2, 3)))


# -- the three projection sources -------------------------------------------


def test_projection_last_layer_separates_classes(clean_bundle, clean_result):
    from sklearn.metrics import silhouette_score

    projection = project_2d(clean_bundle, clean_result, "layer:layer_2")
    score = silhouette_score(projection.coords, clean_bundle.test_labels)
    assert score > 0.5


def test_projection_pattern_all_zero_at_origin(tmp_path):
    from difflens.synth import SynthSpec, synth_generate
    from difflens.bundle import load_bundle

    spec = SynthSpec(n_classes=3, n_train=40, n_test=15, input_dim=5, layer_dims=(4, 4),
                     noise=0.0, n_late_separators=0, n_mislabeled=0, n_confusable=0,
                     n_annotators=0, seed=21)
    synth_generate(spec, tmp_path / "zero")
    bundle = load_bundle(tmp_path / "zero")
    result = run_pipeline(bundle, DifficultyConfig(k=3), IndexParams(mode="exact"))
    assert np.all(result.layer_kdn == 0)
    projection = project_2d(bundle, result, "pattern")
    assert np.allclose(projection.coords, 0.0)


def test_projection_pixel_equals_fit_plus_transform(clean_bundle, clean_result):
    projection = project_2d(clean_bundle, clean_result, "pixel")
    model = pca_fit(np.asarray(clean_bundle.train["input"], dtype=np.float64), 2)
    expected = pca_transform(model, np.asarray(clean_bundle.test["input"], dtype=np.float64))
    assert np.allclose(projection.coords, expected, atol=1e-9)
    assert projection.ids == clean_result.ids


def test_projection_unknown_source(clean_bundle, clean_result):
    with pytest.raises(PcaError, match="unknown projection source"):
        project_2d(clean_bundle, clean_result, "layer:nope")


def test_knn_in_99pct_pca_space_changes_few_predictions(small_bundle):
    """Compression to a >=99% variance basis moves <2% of probe predictions."""
    train = np.asarray(small_bundle.train["input"], dtype=np.float64)
    test = np.asarray(small_bundle.test["input"], dtype=np.float64)
    full = pca_fit(train, min(train.shape))
    total = full.explained_variance.sum()
    p = int(np.searchsorted(np.cumsum(full.explained_variance) / total, 0.99) + 1)
    model = pca_fit(train, p)
    raw_index = ExactIndex(train, "input")
    red_index = ExactIndex(pca_transform(model, train), "input")
    labels = small_bundle.train_labels
    changed = sum(
        knn_predict(raw_index, labels, test[i], 10)
        != knn_predict(red_index, labels, pca_transform(model, test[i][None])[0], 10)
        for i in range(test.shape[0])
    )
    rate = changed / test.shape[0]
    print(f"prediction change rate under 99% PCA compression: {rate:.4f} (p={p})")
    assert rate < 0.02


def test_project_rows_single_column_source():
    rng = np.random.default_rng(2)
    train = rng.standard_normal((20, 1))
    coords, model = project_rows(train, train, "x")
    assert coords.shape == (20, 2)
    assert np.allclose(coords[:, 1], 0.0)
