from __future__ import annotations

import warnings

import numpy as np
from scipy import linalg, sparse
from scipy.sparse.linalg import eigsh
from sklearn.neighbors import NearestNeighbors

from ._base import ReductionMixin, fix_signs


class ExtrapolationWarning(UserWarning):
    pass


def barycenter_weights(X: np.ndarray, Y: np.ndarray, indices: np.ndarray, reg: float) -> np.ndarray:
    """Weights reconstructing each ``X[i]`` from ``Y[indices[i]]``, summing to one.

    The local Gram matrix is regularised by ``reg * trace``.
    """
    k = indices.shape[1]
    Z = Y[indices] - X[:, None, :]
    G = Z @ Z.transpose(0, 2, 1)
    tr = np.trace(G, axis1=1, axis2=2)
    G += np.where(tr > 0, reg * tr, reg)[:, None, None] * np.eye(k)
    w = np.linalg.solve(G, np.ones(G.shape[:2])[..., None])[..., 0]
    return w / w.sum(axis=1, keepdims=True)


class LocallyLinearEmbedding(ReductionMixin):
    """Standard LLE with barycentric out-of-sample maps in both directions.

    ``transform`` embeds new points with the reconstruction weights of their
    ``n_neighbors`` nearest training activations.  ``inverse_transform``
    does the reverse: weights of a point relative to its nearest training
    embeddings are applied to the matching training activations.  Points
    whose nearest training embedding is farther than the 99.9th percentile
    of training nearest-neighbour distances raise :class:`ExtrapolationWarning`;
    :meth:`extrapolation_mask` reports them individually.

    The embedding eigenproblem is solved on at most ``max_fit_samples``
    seeded random rows; the rest only serve as data for ``transform``.
    """

    kind = "LLE"

    def __init__(self, n_components: int = 3, n_neighbors: int = 12, reg: float = 1e-3,
                 max_fit_samples: int | None = 3000, random_state: int | None = 0):
        self.n_components = n_components
        self.n_neighbors = n_neighbors
        self.reg = reg
        self.max_fit_samples = max_fit_samples
        self.random_state = random_state

    def fit(self, X, y=None):
        X = self._validate_fit_input(X)
        n, k = self.n_components, self.n_neighbors
        if self.max_fit_samples is not None and X.shape[0] > self.max_fit_samples:
            rng = np.random.default_rng(self.random_state)
            rows = np.sort(rng.choice(X.shape[0], self.max_fit_samples, replace=False))
            X = X[rows]
        N = X.shape[0]
        if k >= N:
            raise ValueError(f"n_neighbors={k} must be smaller than the {N} fit samples")

        nbrs = NearestNeighbors(n_neighbors=k + 1).fit(X)
        ind = nbrs.kneighbors(X, return_distance=False)[:, 1:]
        B = barycenter_weights(X, X, ind, self.reg)
        W = sparse.csr_matrix((B.ravel(), ind.ravel(), np.arange(0, N * k + 1, k)), shape=(N, N))
        IW = sparse.identity(N, format="csr") - W
        M = (IW.T @ IW).tocsr()

        if N <= 5000:
            evals, evecs = linalg.eigh(M.toarray(), subset_by_index=(0, n))
        else:
            evals, evecs = eigsh(M, k=n + 1, sigma=0.0, tol=1e-6,
                                 v0=np.random.default_rng(self.random_state).uniform(-1, 1, N))
            order = np.argsort(evals)
            evals, evecs = evals[order], evecs[:, order]

        Y = evecs[:, 1:n + 1]
        self.n_components_ = n
        self._set_training_pairs(X, Y * fix_signs(Y.T)[None, :])
        self.diagnostics_ = {"iterations": 1, "converged": True,
                             "objective": float(evals[1:].sum())}
        return self

    def _set_training_pairs(self, X, Y):
        self.train_X_ = X
        self.embedding_ = Y
        self._nn_X = NearestNeighbors(n_neighbors=self.n_neighbors).fit(X)
        self._nn_Y = NearestNeighbors(n_neighbors=self.n_neighbors + 1).fit(Y)
        d, _ = self._nn_Y.kneighbors(Y)
        self.extrapolation_radius_ = float(np.percentile(d[:, 1], 99.9))

    def transform(self, X):
        X = self._validate_input(X)
        ind = self._nn_X.kneighbors(X, n_neighbors=self.n_neighbors, return_distance=False)
        B = barycenter_weights(X, self.train_X_, ind, self.reg)
        return np.einsum("ik,ikd->id", B, self.embedding_[ind])

    def extrapolation_mask(self, Z) -> np.ndarray:
        Z = self._validate_points(Z)
        d, _ = self._nn_Y.kneighbors(Z, n_neighbors=1)
        return d[:, 0] > self.extrapolation_radius_

    def inverse_transform(self, Z):
        Z = self._validate_points(Z)
        ind = self._nn_Y.kneighbors(Z, n_neighbors=self.n_neighbors, return_distance=False)
        B = barycenter_weights(Z, self.embedding_, ind, self.reg)
        mask = self.extrapolation_mask(Z)
        if mask.any():
            warnings.warn(f"{int(mask.sum())} of {len(Z)} points lie outside the training "
                          "embedding; their reconstructions are extrapolated",
                          ExtrapolationWarning, stacklevel=2)
        return np.einsum("ik,ikc->ic", B, self.train_X_[ind])
