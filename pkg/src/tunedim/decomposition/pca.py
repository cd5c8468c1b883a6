from __future__ import annotations

import numpy as np

from ._base import ReductionMixin, fix_signs


class PCA(ReductionMixin):
    """Principal component analysis by SVD of the centred data.

    Parameters
    ----------
    n_components : int
        Number of principal axes to keep.

    Attributes
    ----------
    mean_ : ndarray of shape (n_features,)
    components_ : ndarray of shape (n_components, n_features)
        Orthonormal rows ordered by decreasing explained variance; each
        row's largest-magnitude loading is positive.
    explained_variance_ : ndarray of shape (n_components,)
    explained_variance_ratio_ : ndarray of shape (n_components,)
    """

    kind = "PCA"

    def __init__(self, n_components: int = 3):
        self.n_components = n_components

    def fit(self, X, y=None):
        X = self._validate_fit_input(X)
        n = self.n_components
        self.mean_ = X.mean(axis=0)
        _, s, vt = np.linalg.svd(X - self.mean_, full_matrices=False)
        var = s ** 2 / (X.shape[0] - 1)
        comps = vt[:n] * fix_signs(vt[:n])[:, None]
        self.components_ = comps
        self.explained_variance_ = var[:n]
        total = var.sum()
        self.explained_variance_ratio_ = var[:n] / total if total > 0 else np.zeros(n)
        self.n_components_ = n
        self.diagnostics_ = {"iterations": 1, "converged": True,
                             "objective": float(var[n:].sum())}
        return self

    @property
    def mixing_(self) -> np.ndarray:
        return self.components_.T

    def transform(self, X):
        X = self._validate_input(X)
        return (X - self.mean_) @ self.components_.T

    def inverse_transform(self, Z):
        Z = self._validate_points(Z)
        return self.mean_ + Z @ self.components_
