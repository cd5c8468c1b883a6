import warnings

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from tunedim.decomposition import (NMF, PCA, ExtrapolationWarning, FastICA,
                                   LocallyLinearEmbedding, NegativeInputError, amari_index,
                                   fit_reduction, load_model, make_reducer, save_model)


@pytest.fixture(scope="module")
def data():
    rng = np.random.default_rng(0)
    latent = rng.standard_normal((600, 4)) * [3, 2, 1, 0.5]
    return latent @ rng.standard_normal((4, 8)) + 0.05 * rng.standard_normal((600, 8)) + 1.0


@pytest.fixture(scope="module")
def sources():
    rng = np.random.default_rng(1)
    S = rng.uniform(-1, 1, size=(10_000, 2))
    A = np.array([[2.0, 1.0], [1.0, 1.0]])
    return S, A, S @ A.T


# ---------------------------------------------------------------- PCA

def test_pca_collinear_example():
    X = np.array([[1, 1], [-1, -1], [2, 2], [-2, -2]], dtype=float)
    pca = PCA(1).fit(X)
    assert np.allclose(pca.components_[0], [np.sqrt(0.5), np.sqrt(0.5)])
    assert pca.explained_variance_ratio_[0] == pytest.approx(1.0)


def test_pca_orthonormal_and_ordered(data):
    pca = PCA(5).fit(data)
    assert np.allclose(pca.components_ @ pca.components_.T, np.eye(5), atol=1e-8)
    assert np.all(np.diff(pca.explained_variance_) <= 0)


def test_pca_mean_maps_to_zero_and_back(data):
    pca = PCA(3).fit(data)
    assert np.allclose(pca.transform(pca.mean_[None]), 0, atol=1e-12)
    assert np.allclose(pca.inverse_transform(np.zeros((1, 3))), pca.mean_)
    e1 = np.array([[1.0, 0, 0]])
    assert np.allclose(pca.inverse_transform(e1)[0], pca.mean_ + pca.components_[0])


def test_pca_full_rank_round_trip(data):
    rng = np.random.default_rng(9)
    pca = PCA(8).fit(data[:500])
    held = data[500:]
    back = pca.inverse_transform(pca.transform(held))
    assert np.max(np.abs(back - held) / np.abs(held).max()) < 1e-8
    assert np.max(np.linalg.norm(back - held, axis=1) / np.linalg.norm(held, axis=1)) < 1e-6
    x = rng.standard_normal((1, 8))
    assert np.allclose(pca.inverse_transform(pca.transform(x)), x, rtol=1e-8)


def test_pca_sign_convention(data):
    comps = PCA(4).fit(data).components_
    idx = np.argmax(np.abs(comps), axis=1)
    assert np.all(comps[np.arange(4), idx] > 0)


# ---------------------------------------------------------------- ICA

def test_ica_recovers_two_sources(sources):
    S, A, X = sources
    ica = FastICA(2, random_state=0).fit(X)
    Y = ica.transform(X)
    corr = np.abs(np.corrcoef(S.T, Y.T)[:2, 2:])
    assert np.all(corr.max(axis=1) > 0.99)
    assert ica.diagnostics_["converged"]


def test_ica_amari_index(sources):
    S, A, X = sources
    ica = FastICA(2, random_state=0).fit(X)
    assert amari_index(ica.components_, A) < 0.05


def test_amari_index_is_zero_for_scaled_permutation():
    A = np.array([[2.0, 1.0], [1.0, 1.0]])
    W = np.array([[0, -3.0], [0.5, 0]]) @ np.linalg.inv(A)
    assert amari_index(W, A) == pytest.approx(0.0, abs=1e-12)


def test_ica_whitens_training_data(data):
    ica = FastICA(4, random_state=0).fit(data)
    Z = ica.transform(data)
    assert np.allclose(np.cov(Z.T), np.eye(4), atol=1e-2)


def test_ica_inverse_consistency(data):
    ica = FastICA(3, random_state=0).fit(data)
    z = np.random.default_rng(2).standard_normal((10, 3))
    assert np.allclose(ica.transform(ica.inverse_transform(z)), z, atol=1e-8)
    assert np.allclose(ica.inverse_transform(np.zeros((1, 3)))[0], ica.mean_)


def _projector(rows):
    q, _ = np.linalg.qr(rows.T)
    return q @ q.T


def test_ica_row_permutation_keeps_span(data):
    perm = np.random.default_rng(3).permutation(len(data))
    a = FastICA(3, random_state=0).fit(data).components_
    b = FastICA(3, random_state=0).fit(data[perm]).components_
    assert np.max(np.abs(_projector(a) - _projector(b))) < 1e-6


def test_ica_row_permutation_keeps_components(sources):
    _, _, X = sources
    perm = np.random.default_rng(3).permutation(len(X))
    # a tight tol keeps both runs from stopping one iteration apart
    a = FastICA(2, tol=1e-12, random_state=0).fit(X)
    b = FastICA(2, tol=1e-12, random_state=0).fit(X[perm])
    an = a.components_ / np.linalg.norm(a.components_, axis=1, keepdims=True)
    bn = b.components_ / np.linalg.norm(b.components_, axis=1, keepdims=True)
    match = np.argmax(np.abs(an @ bn.T), axis=1)
    assert sorted(match) == [0, 1]
    signs = np.sign(np.sum(an * bn[match], axis=1))
    assert np.max(np.abs(an - signs[:, None] * bn[match])) < 1e-6


def test_ica_non_convergence_is_flagged(data):
    ica = FastICA(4, max_iter=1, tol=1e-12, random_state=0).fit(data)
    assert ica.diagnostics_["converged"] is False


# ---------------------------------------------------------------- NMF

@pytest.fixture(scope="module")
def factorable():
    rng = np.random.default_rng(4)
    return rng.random((200, 2)) @ rng.random((2, 10))


def test_nmf_factorable_instance(factorable):
    nmf = NMF(2, tol=1e-10, max_iter=5000, random_state=0).fit(factorable)
    rel = np.linalg.norm(nmf.embedding_ @ nmf.components_ - factorable) / np.linalg.norm(factorable)
    assert rel < 1e-3
    assert np.all(nmf.components_ >= 0) and np.all(nmf.embedding_ >= 0)


def test_nmf_objective_monotone(factorable):
    trace = NMF(2, random_state=1).fit(factorable).objective_trace_
    assert np.all(np.diff(trace) <= 1e-12 * trace[0])


def test_nmf_transform_nonnegative(factorable):
    nmf = NMF(2, random_state=0).fit(factorable)
    Z = nmf.transform(factorable[:20] + 0.01)
    assert np.all(Z >= 0)
    assert Z.shape == (20, 2)


def test_nmf_rejects_negative_input():
    with pytest.raises(NegativeInputError):
        NMF(2).fit(np.array([[1.0, -0.1], [0.5, 0.2], [0.3, 0.3]]))


def test_nmf_inverse_is_linear(factorable):
    nmf = NMF(2, random_state=0).fit(factorable)
    z = np.array([[0.3, 1.2]])
    assert np.allclose(nmf.inverse_transform(z), z @ nmf.components_)


# ---------------------------------------------------------------- LLE

@pytest.fixture(scope="module")
def swiss():
    rng = np.random.default_rng(5)
    t = rng.uniform(1.5 * np.pi, 4.5 * np.pi, 800)
    h = rng.uniform(0, 10, 800)
    return np.column_stack([t * np.cos(t), h, t * np.sin(t)])


def test_lle_embeds_and_inverts(swiss):
    lle = LocallyLinearEmbedding(2, random_state=0).fit(swiss)
    Y = lle.transform(swiss)
    assert Y.shape == (800, 2) and np.all(np.isfinite(Y))
    with warnings.catch_warnings():
        warnings.simplefilter("error", ExtrapolationWarning)
        back = lle.inverse_transform(lle.embedding_[:50])
    scale = np.abs(swiss).max()
    assert np.median(np.linalg.norm(back - lle.train_X_[:50], axis=1)) / scale < 0.05


def test_lle_warns_on_extrapolation(swiss):
    lle = LocallyLinearEmbedding(2, random_state=0).fit(swiss)
    far = lle.embedding_.max(axis=0, keepdims=True) + 10.0
    assert lle.extrapolation_mask(far)[0]
    with pytest.warns(ExtrapolationWarning):
        lle.inverse_transform(far)


def test_lle_subsamples_large_inputs(swiss):
    lle = LocallyLinearEmbedding(2, max_fit_samples=300, random_state=0).fit(swiss)
    assert lle.train_X_.shape == (300, 3)


# ---------------------------------------------------------------- common surface

@pytest.mark.parametrize("kind", ["PCA", "ICA", "NMF", "LLE"])
def test_estimator_surface(kind, data, tmp_path):
    X = np.abs(data)
    model = make_reducer(kind, 3, seed=0)
    assert clone(model).get_params() == model.get_params()
    with pytest.raises(NotFittedError):
        model.transform(X)
    model.fit(X)
    Z = model.transform(X)
    assert Z.shape == (len(X), 3) and np.all(np.isfinite(Z))
    assert set(model.diagnostics_) >= {"iterations", "converged", "objective"}
    with pytest.raises(ValueError):
        model.transform(X[:, :5])
    save_model(model, tmp_path / kind)
    again = load_model(tmp_path / kind)
    assert np.allclose(again.transform(X[:10]), model.transform(X[:10]))
    z = Z[:4] * 0.5
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ExtrapolationWarning)
        assert np.allclose(again.inverse_transform(z), model.inverse_transform(z))


@pytest.mark.parametrize("n", [0, 9])
def test_component_count_validated(n, data):
    with pytest.raises(ValueError, match="n_components"):
        fit_reduction("PCA", data, n)


def test_unknown_kind():
    with pytest.raises(ValueError, match="unknown reduction kind"):
        make_reducer("TSNE", 2)


def test_load_model_missing_names_producer(tmp_path):
    with pytest.raises(FileNotFoundError, match="tunedim reduce"):
        load_model(tmp_path)
