from __future__ import annotations

import numpy as np
from scipy import linalg

from ._base import ReductionMixin, fix_signs


def _sym_decorrelation(W: np.ndarray) -> np.ndarray:
    # W <- (W W^T)^{-1/2} W
    s, u = linalg.eigh(W @ W.T)
    s = np.clip(s, np.finfo(W.dtype).tiny, None)
    return (u * (1.0 / np.sqrt(s))) @ u.T @ W


def _logcosh(u: np.ndarray, alpha: float):
    gu = np.tanh(alpha * u)
    g_prime = alpha * (1.0 - gu ** 2)
    return gu, g_prime


def amari_index(unmixing: np.ndarray, mixing: np.ndarray) -> float:
    """Normalised Amari distance between an unmixing estimate and a true mixing.

    Zero iff ``unmixing @ mixing`` is a scaled permutation matrix; at most one.
    """
    P = np.abs(np.asarray(unmixing) @ np.asarray(mixing))
    n = P.shape[0]
    if n < 2:
        return 0.0
    rows = (P.sum(axis=1) / P.max(axis=1) - 1).sum()
    cols = (P.sum(axis=0) / P.max(axis=0) - 1).sum()
    return float((rows + cols) / (2 * n * (n - 1)))


class FastICA(ReductionMixin):
    """FastICA with symmetric decorrelation and the log-cosh contrast.

    The data are centred and whitened to ``n_components`` dimensions by PCA
    (unit variance per whitened axis), then the fixed-point iteration

    ``W <- E[g(W x) x^T] - diag(E[g'(W x)]) W`` followed by
    ``W <- (W W^T)^{-1/2} W``

    runs until ``max |diag(W_new W_old^T)| - 1 < tol``.  Failure to converge
    within ``max_iter`` is reported via ``diagnostics_["converged"]`` rather
    than raised.

    Attributes
    ----------
    mean_ : ndarray of shape (n_features,)
    whitening_ : ndarray of shape (n_components, n_features)
    components_ : ndarray of shape (n_components, n_features)
        Full unmixing matrix, ``sources = (X - mean_) @ components_.T``.
    mixing_ : ndarray of shape (n_features, n_components)
        Pseudo-inverse of ``components_``.  Each column's largest-magnitude
        entry is made positive.
    """

    kind = "ICA"

    def __init__(self, n_components: int = 3, tol: float = 1e-4, max_iter: int = 200,
                 alpha: float = 1.0, random_state: int | None = 0):
        self.n_components = n_components
        self.tol = tol
        self.max_iter = max_iter
        self.alpha = alpha
        self.random_state = random_state

    def fit(self, X, y=None):
        X = self._validate_fit_input(X)
        n = self.n_components
        N = X.shape[0]
        self.mean_ = X.mean(axis=0)
        Xc = X - self.mean_
        _, s, vt = linalg.svd(Xc, full_matrices=False)
        scale = s[:n] / np.sqrt(N)
        if np.any(scale <= np.finfo(float).eps * max(s[0], 1.0)):
            raise ValueError("data has fewer than n_components non-degenerate directions")
        K = vt[:n] / scale[:, None]
        Xw = Xc @ K.T

        rng = np.random.default_rng(self.random_state)
        W = _sym_decorrelation(rng.standard_normal((n, n)))
        converged = False
        it = 0
        for it in range(1, self.max_iter + 1):
            gu, g_prime = _logcosh(Xw @ W.T, self.alpha)
            W_new = _sym_decorrelation(gu.T @ Xw / N - g_prime.mean(axis=0)[:, None] * W)
            lim = np.max(np.abs(np.abs(np.einsum("ij,ij->i", W_new, W)) - 1.0))
            W = W_new
            if lim < self.tol:
                converged = True
                break

        unmixing = W @ K
        mixing = linalg.pinv(unmixing)
        signs = fix_signs(mixing.T)
        self.whitening_ = K
        self.components_ = unmixing * signs[:, None]
        self.mixing_ = mixing * signs[None, :]
        self.n_components_ = n
        u = Xw @ W.T
        objective = float(np.mean(np.log(np.cosh(self.alpha * u))) / self.alpha)
        self.diagnostics_ = {"iterations": it, "converged": converged, "objective": objective}
        return self

    def transform(self, X):
        X = self._validate_input(X)
        return (X - self.mean_) @ self.components_.T

    def inverse_transform(self, Z):
        Z = self._validate_points(Z)
        return self.mean_ + Z @ self.mixing_.T
