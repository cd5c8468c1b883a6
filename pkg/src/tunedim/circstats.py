"""Linear and circular-linear correlation with a zero-variance convention.

Both functions return 0 when either input has (numerically) zero variance,
instead of propagating NaN.
"""

from __future__ import annotations

import numpy as np

_TINY = 1e-12


def pearson(x, y) -> float:
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ValueError("x and y must have the same length")
    xc, yc = x - x.mean(), y - y.mean()
    sx, sy = np.sqrt(xc @ xc), np.sqrt(yc @ yc)
    if sx <= _TINY * max(1.0, np.abs(x).max()) or sy <= _TINY * max(1.0, np.abs(y).max()):
        return 0.0
    return float(np.clip(xc @ yc / (sx * sy), -1.0, 1.0))


def circular_linear_corr(angles, x, period: float = 2 * np.pi) -> float:
    """Mardia's circular-linear correlation between ``angles`` and ``x``.

    ``r = sqrt((r_c^2 + r_s^2 - 2 r_c r_s r_cs) / (1 - r_cs^2))`` where
    ``r_c = corr(x, cos a)``, ``r_s = corr(x, sin a)``, ``r_cs = corr(sin a, cos a)``
    and ``a = 2 pi angles / period``.  Lies in ``[0, 1]``.
    """
    a = 2 * np.pi * np.asarray(angles, dtype=np.float64).ravel() / period
    x = np.asarray(x, dtype=np.float64).ravel()
    if a.shape != x.shape:
        raise ValueError("angles and x must have the same length")
    c, s = np.cos(a), np.sin(a)
    rc, rs, rcs = pearson(x, c), pearson(x, s), pearson(s, c)
    denom = 1.0 - rcs ** 2
    if denom <= _TINY:
        return 0.0
    r2 = (rc ** 2 + rs ** 2 - 2 * rc * rs * rcs) / denom
    return float(np.sqrt(np.clip(r2, 0.0, 1.0)))
