from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted


class ReductionMixin(TransformerMixin, BaseEstimator):
    """Common surface of the four reducers.

    Every fitted reducer exposes ``n_components_``,
    ``n_features_in_`` and a ``diagnostics_`` dict with ``iterations``,
    ``converged`` and ``objective``.
    """

    kind: str = ""

    def _validate_fit_input(self, X) -> np.ndarray:
        X = check_array(X, dtype=np.float64, ensure_min_samples=2)
        n = self.n_components
        if not 1 <= n <= X.shape[1]:
            raise ValueError(f"n_components={n} must satisfy 1 <= n <= n_features={X.shape[1]}")
        if n > X.shape[0]:
            raise ValueError(f"n_components={n} exceeds n_samples={X.shape[0]}")
        self.n_features_in_ = X.shape[1]
        return X

    def _validate_input(self, X) -> np.ndarray:
        check_is_fitted(self, "n_components_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, model was fitted with {self.n_features_in_}")
        return X

    def _validate_points(self, Z) -> np.ndarray:
        check_is_fitted(self, "n_components_")
        Z = check_array(Z, dtype=np.float64)
        if Z.shape[1] != self.n_components_:
            raise ValueError(f"points have {Z.shape[1]} columns, model has {self.n_components_} components")
        return Z


def fix_signs(directions: np.ndarray) -> np.ndarray:
    """Return +-1 per row so that each row's largest-magnitude entry is positive."""
    idx = np.argmax(np.abs(directions), axis=1)
    signs = np.sign(directions[np.arange(directions.shape[0]), idx])
    signs[signs == 0] = 1.0
    return signs
