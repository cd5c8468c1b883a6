"""Gabor filter banks and a minimal differentiable convolution layer.

Kernels are indexed ``[row, col]`` which we call ``[y, x]``; images are
``H x W x C`` arrays.  All convolutions are valid cross-correlations (no
flip, no padding).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import npyio
from ._io import atomic_write_text

FREQUENCY_RANGE = (0.2, 0.3)
ANGLE_RANGE = (0.0, math.pi / 2)
PHASE_RANGE = (-math.pi / 2, math.pi / 2)
DEFAULT_SIGMA = 2.0
DEFAULT_GAMMA = 1.0


class InvalidParameterError(ValueError):
    pass


class ShapeError(ValueError):
    pass


@dataclass(frozen=True)
class GaborParams:
    """Parameters of a single Gabor filter.

    ``lambda_`` is the wavelength in pixels, so the preferred spatial
    frequency is ``1 / lambda_`` cycles per pixel.
    """

    lambda_: float
    theta: float
    psi: float
    sigma: float = DEFAULT_SIGMA
    gamma: float = DEFAULT_GAMMA

    def __post_init__(self):
        for name in ("lambda_", "sigma", "gamma"):
            value = getattr(self, name)
            if not math.isfinite(value) or value <= 0:
                raise InvalidParameterError(f"{name} must be finite and > 0, got {value!r}")
        for name in ("theta", "psi"):
            if not math.isfinite(getattr(self, name)):
                raise InvalidParameterError(f"{name} must be finite")

    @property
    def frequency(self) -> float:
        return 1.0 / self.lambda_

    def to_dict(self) -> dict:
        return {"lambda": self.lambda_, "theta": self.theta, "psi": self.psi,
                "sigma": self.sigma, "gamma": self.gamma}

    @classmethod
    def from_dict(cls, d: dict) -> "GaborParams":
        return cls(lambda_=float(d["lambda"]), theta=float(d["theta"]), psi=float(d["psi"]),
                   sigma=float(d["sigma"]), gamma=float(d["gamma"]))


def gabor_kernel(p: GaborParams, k: int) -> np.ndarray:
    """Evaluate a Gabor filter on the ``k x k`` grid of integer offsets.

    Entry ``[y, x]`` holds ``g(x - r, y - r)`` with ``r = (k - 1) / 2``.
    """
    if k < 3 or k % 2 == 0:
        raise InvalidParameterError(f"kernel size must be odd and >= 3, got {k}")
    r = (k - 1) // 2
    y, x = np.mgrid[-r:r + 1, -r:r + 1].astype(np.float64)
    xr = x * math.cos(p.theta) + y * math.sin(p.theta)
    yr = -x * math.sin(p.theta) + y * math.cos(p.theta)
    envelope = np.exp(-(xr ** 2 + p.gamma ** 2 * yr ** 2) / (2.0 * p.sigma ** 2))
    return envelope * np.cos(2.0 * math.pi * xr / p.lambda_ + p.psi)


def _correlate(x: np.ndarray, w: np.ndarray, stride: int) -> np.ndarray:
    # x: (H, W, Cin), w: (Cout, Cin, k, k) -> (h, w, Cout)
    c_out, c_in, k, _ = w.shape
    windows = sliding_window_view(x, (k, k), axis=(0, 1))[::stride, ::stride]
    h, wo = windows.shape[:2]
    return (windows.reshape(h * wo, c_in * k * k) @ w.reshape(c_out, -1).T).reshape(h, wo, c_out)


def _correlate_adjoint(grad: np.ndarray, w: np.ndarray, stride: int,
                       in_shape: tuple[int, int, int]) -> np.ndarray:
    h, wo, _ = grad.shape
    k = w.shape[-1]
    out = np.zeros(in_shape, dtype=np.result_type(grad, w))
    c_out, c_in = w.shape[:2]
    # (h*w, Cout) @ (Cout, Cin*k*k), then scatter tap by tap
    taps = (grad.reshape(h * wo, c_out) @ w.reshape(c_out, -1)).reshape(h, wo, c_in, k, k)
    for a in range(k):
        for b in range(k):
            out[a:a + stride * (h - 1) + 1:stride, b:b + stride * (wo - 1) + 1:stride] += taps[:, :, :, a, b]
    return out


@dataclass(frozen=True)
class ActivationMap:
    values: np.ndarray
    layer_id: str = "bank"

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.values.shape


@dataclass(frozen=True, eq=False)
class FilterBank:
    """A bank of grayscale ``k x k`` filters applied with a fixed stride.

    Multi-channel inputs are handled by replicating each kernel across the
    input channels and averaging, which is the same as filtering the
    channel-mean image.
    """

    weights: np.ndarray
    stride: int = 2
    params: tuple[GaborParams, ...] = ()
    apply_relu: bool = False
    layer_id: str = "bank"

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 3 or w.shape[1] != w.shape[2]:
            raise ShapeError(f"weights must have shape (c, k, k), got {w.shape}")
        if w.shape[1] % 2 == 0:
            raise ShapeError("kernel size must be odd")
        if not np.all(np.isfinite(w)):
            raise InvalidParameterError("weights must be finite")
        if int(self.stride) < 1:
            raise InvalidParameterError("stride must be >= 1")
        if len(self.params) not in (0, w.shape[0]):
            raise InvalidParameterError("params must be empty or have one entry per filter")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "stride", int(self.stride))
        object.__setattr__(self, "params", tuple(self.params))

    @property
    def n_channels(self) -> int:
        return self.weights.shape[0]

    @property
    def kernel_size(self) -> int:
        return self.weights.shape[1]

    def output_shape(self, H: int, W: int) -> tuple[int, int]:
        k, s = self.kernel_size, self.stride
        if H < k or W < k:
            raise ShapeError(f"image {H}x{W} is smaller than the {k}x{k} kernel")
        return (H - k) // s + 1, (W - k) // s + 1

    def receptive_field(self, i: int, j: int) -> tuple[float, float]:
        """Centre ``(y, x)`` in input pixels of output position ``(i, j)``."""
        r = (self.kernel_size - 1) / 2
        return i * self.stride + r, j * self.stride + r

    def _check_image(self, image) -> np.ndarray:
        image = np.asarray(image, dtype=np.float64)
        if image.ndim == 2:
            image = image[:, :, None]
        if image.ndim != 3:
            raise ShapeError(f"image must be H x W x C, got shape {image.shape}")
        self.output_shape(image.shape[0], image.shape[1])
        return image

    def preactivation(self, image) -> np.ndarray:
        image = self._check_image(image)
        gray = image.mean(axis=2, keepdims=True)
        return _correlate(gray, self.weights[:, None], self.stride)

    def forward(self, image) -> ActivationMap:
        out = self.preactivation(image)
        if self.apply_relu:
            out = np.maximum(out, 0.0)
        return ActivationMap(out, self.layer_id)

    def backward(self, image, grad_out) -> np.ndarray:
        image = self._check_image(image)
        grad_out = np.asarray(grad_out, dtype=np.float64)
        h, w = self.output_shape(image.shape[0], image.shape[1])
        if grad_out.shape != (h, w, self.n_channels):
            raise ShapeError(f"grad_out shape {grad_out.shape} != {(h, w, self.n_channels)}")
        if self.apply_relu:
            grad_out = grad_out * (self.preactivation(image) > 0)
        C = image.shape[2]
        g = _correlate_adjoint(grad_out, self.weights[:, None], self.stride, image.shape[:2] + (1,))
        return np.repeat(g / C, C, axis=2)

    def with_relu(self, apply_relu: bool = True) -> "FilterBank":
        return FilterBank(self.weights, self.stride, self.params, apply_relu, self.layer_id)

    def subset(self, indices: Sequence[int]) -> "FilterBank":
        idx = list(indices)
        params = tuple(self.params[i] for i in idx) if self.params else ()
        return FilterBank(self.weights[idx], self.stride, params, self.apply_relu, self.layer_id)

    def save(self, directory) -> dict[str, Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = {"weights": directory / "bank_weights.npy",
                 "params": directory / "bank_params.json",
                 "meta": directory / "bank_meta.json"}
        npyio.save_npy(paths["weights"], self.weights.astype("<f4"))
        atomic_write_text(paths["params"], json.dumps([p.to_dict() for p in self.params], indent=2))
        atomic_write_text(paths["meta"], json.dumps(
            {"stride": self.stride, "apply_relu": self.apply_relu, "layer_id": self.layer_id},
            indent=2))
        return paths

    @classmethod
    def load(cls, directory) -> "FilterBank":
        directory = Path(directory)
        weights = npyio.load_npy(directory / "bank_weights.npy", ndim=3)
        params_path = directory / "bank_params.json"
        meta_path = directory / "bank_meta.json"
        params = ()
        if params_path.exists():
            params = tuple(GaborParams.from_dict(d) for d in json.loads(params_path.read_text()))
        meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
        return cls(weights, stride=meta.get("stride", 2), params=params,
                   apply_relu=meta.get("apply_relu", False), layer_id=meta.get("layer_id", "bank"))


@dataclass(frozen=True, eq=False)
class ConvLayer:
    """Full multi-channel convolution, used for deeper built-in stacks."""

    weights: np.ndarray  # (c_out, c_in, k, k)
    stride: int = 1
    apply_relu: bool = True

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 4 or w.shape[2] != w.shape[3] or w.shape[2] % 2 == 0:
            raise ShapeError(f"weights must have shape (c_out, c_in, k, k) with odd k, got {w.shape}")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def n_channels(self) -> int:
        return self.weights.shape[0]

    @property
    def kernel_size(self) -> int:
        return self.weights.shape[2]

    def preactivation(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[2] != self.weights.shape[1]:
            raise ShapeError(f"expected {self.weights.shape[1]} input channels, got {x.shape[2]}")
        if x.shape[0] < self.kernel_size or x.shape[1] < self.kernel_size:
            raise ShapeError("input smaller than kernel")
        return _correlate(x, self.weights, self.stride)

    def forward(self, x) -> ActivationMap:
        out = self.preactivation(x)
        return ActivationMap(np.maximum(out, 0.0) if self.apply_relu else out, "conv")

    def backward(self, x, grad_out) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if self.apply_relu:
            grad_out = grad_out * (self.preactivation(x) > 0)
        return _correlate_adjoint(grad_out, self.weights, self.stride, x.shape)


@dataclass(frozen=True, eq=False)
class ConvStack:
    """Up to three conv layers applied in sequence; the first is usually a FilterBank."""

    layers: tuple
    layer_id: str = "stack"

    def __post_init__(self):
        if not 1 <= len(self.layers) <= 3:
            raise InvalidParameterError("a stack holds between 1 and 3 layers")
        object.__setattr__(self, "layers", tuple(self.layers))

    @property
    def n_channels(self) -> int:
        return self.layers[-1].n_channels

    def _inputs(self, image):
        xs = [np.asarray(image, dtype=np.float64)]
        for layer in self.layers[:-1]:
            xs.append(layer.forward(xs[-1]).values)
        return xs

    def output_shape(self, H: int, W: int) -> tuple[int, int]:
        h, w = H, W
        for layer in self.layers:
            k, s = layer.kernel_size, layer.stride
            if h < k or w < k:
                raise ShapeError(f"input {h}x{w} is smaller than the {k}x{k} kernel")
            h, w = (h - k) // s + 1, (w - k) // s + 1
        return h, w

    def forward(self, image) -> ActivationMap:
        xs = self._inputs(image)
        return ActivationMap(self.layers[-1].forward(xs[-1]).values, self.layer_id)

    def backward(self, image, grad_out) -> np.ndarray:
        xs = self._inputs(image)
        g = np.asarray(grad_out, dtype=np.float64)
        for layer, x in zip(reversed(self.layers), reversed(xs)):
            g = layer.backward(x, g)
        return g


def build_gabor_bank(count: int = 28, k: int = 7, stride: int = 2, seed: int = 0,
                     apply_relu: bool = False, sigma: float = DEFAULT_SIGMA,
                     gamma: float = DEFAULT_GAMMA) -> FilterBank:
    """Sample a reproducible Gabor bank.

    Draws come from a PCG64 generator in filter-major order: for each filter,
    frequency, then angle, then phase, each uniform over its range.
    """
    if count < 1:
        raise InvalidParameterError("count must be >= 1")
    rng = np.random.Generator(np.random.PCG64(seed))
    params = []
    for _ in range(count):
        freq = rng.uniform(*FREQUENCY_RANGE)
        theta = rng.uniform(*ANGLE_RANGE)
        psi = rng.uniform(*PHASE_RANGE)
        params.append(GaborParams(lambda_=1.0 / freq, theta=theta, psi=psi, sigma=sigma, gamma=gamma))
    weights = np.stack([gabor_kernel(p, k) for p in params])
    return FilterBank(weights, stride=stride, params=tuple(params), apply_relu=apply_relu)


def forward(bank, image) -> ActivationMap:
    return bank.forward(image)


def backward(bank, image, grad_out) -> np.ndarray:
    return bank.backward(image, grad_out)

