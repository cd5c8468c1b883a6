"""Sampling points along one component of a fitted reduction.

Coordinates are chosen along component ``d`` of the transformed activations
``A'`` while every other coordinate stays at zero, then mapped back to
activation space with the reducer's ``inverse_transform``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._io import write_json
from .npyio import load_npy, save_npy

STRATEGIES = ("uniform_minmax", "equal_proportion")


class DegenerateDimensionError(ValueError):
    def __init__(self, d: int):
        super().__init__(f"dimension d={d} is constant (observed min == max); nothing to sample")
        self.d = d


@dataclass(frozen=True)
class SampleSpec:
    """``m`` points per dimension, spaced by ``strategy``.

    ``uniform_minmax`` spaces points evenly between the observed min and max;
    ``equal_proportion`` places them at evenly spaced quantiles, so the same
    share of observations falls between neighbouring points.
    """

    m: int = 32
    strategy: str = "uniform_minmax"

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 2:
            raise ValueError(f"m must be an integer >= 2, got {self.m!r}")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")

    def to_dict(self) -> dict:
        return {"m": int(self.m), "strategy": self.strategy}


@dataclass(frozen=True, eq=False)
class TuningDimension:
    d: int
    strategy: str
    coordinates: np.ndarray
    activation_points: np.ndarray
    observed_min: float
    observed_max: float
    extrapolated: np.ndarray | None = None

    @property
    def m(self) -> int:
        return len(self.coordinates)

    def metadata(self) -> dict:
        meta = {"d": int(self.d), "strategy": self.strategy,
                "coordinates": [float(c) for c in self.coordinates],
                "min": float(self.observed_min), "max": float(self.observed_max)}
        if self.extrapolated is not None:
            meta["extrapolated"] = [bool(e) for e in self.extrapolated]
        return meta

    def save(self, path) -> dict[str, Path]:
        """Write ``activation_points`` to ``path`` (NPY) and metadata next to it (JSON)."""
        path = Path(path)
        return {"points": save_npy(path, self.activation_points),
                "meta": write_json(path.with_suffix(".json"), self.metadata())}

    @classmethod
    def load(cls, path) -> "TuningDimension":
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"{path} not found (produce it with `tunedim sample`)")
        meta = json.loads(path.with_suffix(".json").read_text())
        ext = meta.get("extrapolated")
        return cls(int(meta["d"]), meta["strategy"], np.asarray(meta["coordinates"]),
                   load_npy(path, ndim=2), float(meta["min"]), float(meta["max"]),
                   None if ext is None else np.asarray(ext, dtype=bool))


def sample_coordinates(column, spec: SampleSpec) -> np.ndarray:
    column = np.asarray(column, dtype=np.float64).ravel()
    if spec.strategy == "uniform_minmax":
        return np.linspace(column.min(), column.max(), spec.m)
    return np.quantile(column, np.linspace(0.0, 1.0, spec.m))


def sample_dimension(model, A_prime, d: int, spec: SampleSpec = SampleSpec()) -> TuningDimension:
    """Sample ``spec.m`` points along component ``d`` of ``A_prime``.

    Parameters
    ----------
    model : fitted reducer
        Anything with ``n_components_`` and ``inverse_transform``.
    A_prime : ndarray of shape (N, n)
        Transformed activations, used only for the observed range of column ``d``.
    d : int
        Component index.
    spec : SampleSpec

    Returns
    -------
    TuningDimension
    """
    A_prime = np.asarray(A_prime, dtype=np.float64)
    if A_prime.ndim != 2 or A_prime.shape[0] == 0:
        raise ValueError("transformed activations must be a non-empty 2-D array")
    n = A_prime.shape[1]
    if not 0 <= d < n:
        raise ValueError(f"component index d={d} out of range for n={n}")
    column = A_prime[:, d]
    lo, hi = float(column.min()), float(column.max())
    if lo == hi:
        raise DegenerateDimensionError(d)
    coords = sample_coordinates(column, spec)
    Z = np.zeros((spec.m, n))
    Z[:, d] = coords
    points = np.asarray(model.inverse_transform(Z), dtype=np.float64)
    extrapolated = None
    if hasattr(model, "extrapolation_mask"):
        extrapolated = np.asarray(model.extrapolation_mask(Z), dtype=bool)
    return TuningDimension(d, spec.strategy, coords, points, lo, hi, extrapolated)


def sample_all(model, A_prime, spec: SampleSpec = SampleSpec()) -> list[TuningDimension]:
    return [sample_dimension(model, A_prime, d, spec) for d in range(np.shape(A_prime)[1])]
