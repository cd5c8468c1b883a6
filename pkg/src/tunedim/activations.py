"""Collecting the activation sample ``A`` (N x c) and moving it through NPY files."""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ._io import write_json
from .npyio import NpyFormatError, load_npy, save_npy


class EmptyInteriorError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ActivationMatrix:
    """``data[r]`` is the activation vector of stimulus ``stim[r]`` at ``(i[r], j[r])``.

    Provenance arrays are ``None`` for externally produced matrices.
    """

    data: np.ndarray
    stim: np.ndarray | None = None
    i: np.ndarray | None = None
    j: np.ndarray | None = None
    layer_id: str = "bank"

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 2:
            raise ValueError(f"activation matrix must be 2-D, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("activation matrix contains non-finite values")
        for name in ("stim", "i", "j"):
            arr = getattr(self, name)
            if arr is not None and len(arr) != data.shape[0]:
                raise ValueError(f"provenance field {name!r} has {len(arr)} rows, data has {data.shape[0]}")

    @property
    def shape(self):
        return self.data.shape

    def provenance(self) -> dict:
        if self.stim is None:
            return {"rows": []}
        return {"rows": [{"stim": int(s), "i": int(a), "j": int(b)}
                         for s, a, b in zip(self.stim, self.i, self.j)]}


def _interior_bounds(model, H: int, W: int) -> tuple[int, int]:
    h, w = model.output_shape(H, W)
    if h < 3 or w < 3:
        raise EmptyInteriorError(
            f"activation map is {h}x{w}; need at least 3x3 so a one-position border can be skipped")
    return h, w


def collect(model, corpus: Sequence, N: int, seed: int = 0, threads: int = 1,
            layer_id: str | None = None) -> ActivationMatrix:
    """Sample one activation vector per stimulus at a random interior position.

    Row ``r`` uses stimulus ``r % len(corpus)`` and a position drawn uniformly
    from ``[1, h-2] x [1, w-2]``, i.e. never on the outermost ring of the
    activation map.  Positions are drawn up front from ``seed`` so the result
    does not depend on ``threads``.
    """
    if len(corpus) == 0:
        raise ValueError("corpus is empty")
    if N < 1:
        raise ValueError("N must be >= 1")
    first = np.asarray(corpus[0])
    h, w = _interior_bounds(model, first.shape[0], first.shape[1])
    rng = np.random.default_rng(seed)
    ii = rng.integers(1, h - 1, size=N)
    jj = rng.integers(1, w - 1, size=N)
    stim = np.arange(N) % len(corpus)
    data = np.empty((N, model.n_channels), dtype=np.float32)

    def work(r: int):
        amap = model.forward(corpus[int(stim[r])]).values
        if amap.shape[:2] != (h, w):
            raise ValueError(f"stimulus {stim[r]} produced a {amap.shape[:2]} map, expected {(h, w)}")
        data[r] = amap[ii[r], jj[r]]

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, range(N)))
    else:
        for r in range(N):
            work(r)
    return ActivationMatrix(data, stim, ii, jj, layer_id or getattr(model, "layer_id", "model"))


def save_activations(path, A: ActivationMatrix) -> dict[str, Path]:
    """Write ``A.data`` as float32 NPY plus a ``.provenance.json`` sidecar."""
    path = Path(path)
    paths = {"data": save_npy(path, np.asarray(A.data, dtype=np.float32))}
    sidecar = path.with_suffix(".provenance.json")
    prov = A.provenance()
    prov["layer_id"] = A.layer_id
    paths["provenance"] = write_json(sidecar, prov)
    return paths


def load_activations(path) -> ActivationMatrix:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"{path} not found (produce it with `tunedim collect`)")
    data = load_npy(path, ndim=2)
    sidecar = path.with_suffix(".provenance.json")
    if sidecar.exists():
        prov = json.loads(sidecar.read_text())
        rows = prov.get("rows") or []
        layer_id = prov.get("layer_id", "external")
        if len(rows) == data.shape[0]:
            return ActivationMatrix(data, np.array([r["stim"] for r in rows]),
                                    np.array([r["i"] for r in rows]),
                                    np.array([r["j"] for r in rows]), layer_id)
        return ActivationMatrix(data, layer_id=layer_id)
    return ActivationMatrix(data, layer_id="external")


__all__ = ["ActivationMatrix", "EmptyInteriorError", "NpyFormatError", "collect",
           "save_activations", "load_activations"]
