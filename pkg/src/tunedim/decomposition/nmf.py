from __future__ import annotations

import numpy as np

from ._base import ReductionMixin

_EPS = 1e-12


class NegativeInputError(ValueError):
    pass


def nnls_projected_gradient(X: np.ndarray, H: np.ndarray, n_iter: int = 200) -> np.ndarray:
    """Approximately solve ``min_Z>=0 ||X - Z H||_F`` row-wise.

    Projected gradient with the fixed step ``1 / ||H H^T||_2``, started from
    the clipped unconstrained least-squares solution.
    """
    HHt = H @ H.T
    XHt = X @ H.T
    lipschitz = np.linalg.eigvalsh(HHt)[-1]
    Z = np.maximum(np.linalg.lstsq(H.T, X.T, rcond=None)[0].T, 0.0)
    if lipschitz <= 0:
        return Z
    step = 1.0 / lipschitz
    for _ in range(n_iter):
        Z = np.maximum(Z - step * (Z @ HHt - XHt), 0.0)
    return Z


class NMF(ReductionMixin):
    """Non-negative matrix factorisation ``X ~ W H`` by multiplicative updates.

    Minimises ``0.5 * ||X - W H||_F^2`` with the Lee-Seung updates, stopping
    when the relative decrease of the objective falls below ``tol``.  The
    objective after every iteration is kept in ``objective_trace_``.
    ``X`` must be element-wise non-negative; clipping is never done here.

    Attributes
    ----------
    components_ : ndarray of shape (n_components, n_features)
        The factor ``H``.
    embedding_ : ndarray of shape (n_samples, n_components)
        The factor ``W`` for the training data.
    """

    kind = "NMF"

    def __init__(self, n_components: int = 3, tol: float = 1e-4, max_iter: int = 500,
                 random_state: int | None = 0, transform_iter: int = 200):
        self.n_components = n_components
        self.tol = tol
        self.max_iter = max_iter
        self.random_state = random_state
        self.transform_iter = transform_iter

    def _check_nonnegative(self, X):
        if np.any(X < 0):
            raise NegativeInputError(
                f"NMF requires non-negative input; min entry is {X.min():.4g} "
                "(collect with a rectified bank)")

    def fit_transform(self, X, y=None):
        X = self._validate_fit_input(X)
        self._check_nonnegative(X)
        n = self.n_components
        rng = np.random.default_rng(self.random_state)
        avg = np.sqrt(X.mean() / n)
        W = avg * np.abs(rng.standard_normal((X.shape[0], n)))
        H = avg * np.abs(rng.standard_normal((n, X.shape[1])))

        def objective(W, H):
            return 0.5 * float(np.sum((X - W @ H) ** 2))

        trace = [objective(W, H)]
        converged = False
        it = 0
        for it in range(1, self.max_iter + 1):
            H *= (W.T @ X) / (W.T @ W @ H + _EPS)
            W *= (X @ H.T) / (W @ (H @ H.T) + _EPS)
            trace.append(objective(W, H))
            prev, cur = trace[-2], trace[-1]
            if prev == 0 or (prev - cur) / prev < self.tol:
                converged = True
                break

        self.components_ = H
        self.embedding_ = W
        self.objective_trace_ = np.array(trace)
        self.n_components_ = n
        self.reconstruction_err_ = float(np.sqrt(2 * trace[-1]))
        self.diagnostics_ = {"iterations": it, "converged": converged, "objective": trace[-1]}
        return W

    def fit(self, X, y=None):
        self.fit_transform(X)
        return self

    def transform(self, X):
        X = self._validate_input(X)
        self._check_nonnegative(X)
        return nnls_projected_gradient(X, self.components_, self.transform_iter)

    def inverse_transform(self, Z):
        Z = self._validate_points(Z)
        return Z @ self.components_
