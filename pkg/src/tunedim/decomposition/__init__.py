"""Dimensionality reducers with scikit-learn's estimator interface.

All four reducers provide ``fit``, ``transform``, ``fit_transform`` and
``inverse_transform`` so sampled points can be mapped back to activation
space.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .._io import write_json
from ..npyio import load_npy, save_npy
from ._base import ReductionMixin, fix_signs
from .ica import FastICA, amari_index
from .lle import ExtrapolationWarning, LocallyLinearEmbedding
from .nmf import NMF, NegativeInputError
from .pca import PCA

__all__ = ["PCA", "FastICA", "NMF", "LocallyLinearEmbedding", "ReductionMixin",
           "ExtrapolationWarning", "NegativeInputError", "amari_index", "make_reducer",
           "fit_reduction", "save_model", "load_model", "KINDS"]

KINDS = {"PCA": PCA, "ICA": FastICA, "NMF": NMF, "LLE": LocallyLinearEmbedding}

_ARRAYS = {
    "PCA": ("mean_", "components_", "explained_variance_", "explained_variance_ratio_"),
    "ICA": ("mean_", "components_", "mixing_", "whitening_"),
    "NMF": ("components_", "embedding_", "objective_trace_"),
    "LLE": ("train_X_", "embedding_"),
}


def make_reducer(kind: str, n: int, seed: int | None = 0, **hyperparams) -> ReductionMixin:
    key = kind.upper()
    if key not in KINDS:
        raise ValueError(f"unknown reduction kind {kind!r}; expected one of {sorted(KINDS)}")
    cls = KINDS[key]
    if key != "PCA":
        hyperparams.setdefault("random_state", seed)
    return cls(n_components=n, **hyperparams)


def fit_reduction(kind: str, A, n: int, seed: int | None = 0, **hyperparams) -> ReductionMixin:
    return make_reducer(kind, n, seed, **hyperparams).fit(A)


def save_model(model: ReductionMixin, directory) -> dict[str, Path]:
    """Write a JSON header plus one NPY file per fitted array."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {}
    for name in _ARRAYS[model.kind]:
        paths[name] = save_npy(directory / f"{name.rstrip('_')}.npy", getattr(model, name))
    params = model.get_params()
    header = {"kind": model.kind, "n": model.n_components_, "n_features": model.n_features_in_,
              "seed": params.get("random_state"), "hyperparams": params, "diagnostics": model.diagnostics_,
              "arrays": {k: p.name for k, p in paths.items()}}
    paths["header"] = write_json(directory / "model.json", header)
    return paths


def load_model(directory) -> ReductionMixin:
    directory = Path(directory)
    header_path = directory / "model.json"
    if not header_path.exists():
        raise FileNotFoundError(f"{header_path} not found (produce it with `tunedim reduce`)")
    header = json.loads(header_path.read_text())
    model = KINDS[header["kind"]](**header["hyperparams"])
    arrays = {name: load_npy(directory / fname, ndim=None) for name, fname in header["arrays"].items()}
    model.n_components_ = header["n"]
    model.n_features_in_ = header["n_features"]
    model.diagnostics_ = header["diagnostics"]
    if header["kind"] == "LLE":
        model._set_training_pairs(arrays["train_X_"], arrays["embedding_"])
    else:
        for name, value in arrays.items():
            setattr(model, name, value)
    return model
