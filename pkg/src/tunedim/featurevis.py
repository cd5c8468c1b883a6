"""Render activation vectors as images by gradient ascent on mean cosine similarity.

The image is parameterised in the Fourier domain with every spectrum
coefficient scaled so a unit change of it adds the same pixel-space energy.
Each optimisation step applies a small random affine jitter, renders,
runs the built-in differentiable model, and backpropagates the objective
through the model, the bilinear resampler and the inverse real FFT.
"""

from __future__ import annotations

import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import sparse

from ._io import atomic_write_bytes

_NORM_EPS = 1e-8


class InvalidTargetError(ValueError):
    pass


class NonFiniteGradientError(FloatingPointError):
    def __init__(self, step: int):
        super().__init__(f"non-finite gradient at optimisation step {step}")
        self.step = step


# ---------------------------------------------------------------- objective

def objective(a, amap) -> float:
    """Mean over map positions of ``cos(a, amap[i, j])``.

    Positions whose activation norm is below 1e-8 contribute zero.
    """
    return _objective_and_grad(a, amap, need_grad=False)[0]


def _objective_and_grad(a, amap, need_grad: bool = True):
    values = getattr(amap, "values", amap)
    values = np.asarray(values, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64).ravel()
    a_norm = np.linalg.norm(a)
    if not a_norm > 0 or not np.isfinite(a_norm):
        raise InvalidTargetError("target activation vector must be finite and non-zero")
    if values.shape[-1] != a.size:
        raise ValueError(f"target has {a.size} channels, activation map has {values.shape[-1]}")
    a_hat = a / a_norm
    flat = values.reshape(-1, a.size)
    norms = np.linalg.norm(flat, axis=1)
    live = norms >= _NORM_EPS
    safe = np.where(live, norms, 1.0)
    cos = np.where(live, flat @ a_hat / safe, 0.0)
    obj = float(cos.mean())
    if not need_grad:
        return obj, None
    P = flat.shape[0]
    grad = (a_hat[None, :] - cos[:, None] * flat / safe[:, None]) / safe[:, None]
    grad[~live] = 0.0
    return obj, (grad / P).reshape(values.shape)


def _dot_objective_and_grad(a, amap, need_grad: bool = True):
    """Mean over positions of ``<a / |a|, amap[i, j]>``, the unnormalised variant."""
    values = np.asarray(getattr(amap, "values", amap), dtype=np.float64)
    a = np.asarray(a, dtype=np.float64).ravel()
    a_norm = np.linalg.norm(a)
    if not a_norm > 0 or not np.isfinite(a_norm):
        raise InvalidTargetError("target activation vector must be finite and non-zero")
    if values.shape[-1] != a.size:
        raise ValueError(f"target has {a.size} channels, activation map has {values.shape[-1]}")
    a_hat = a / a_norm
    P = values.size // a.size
    obj = float((values.reshape(-1, a.size) @ a_hat).mean())
    if not need_grad:
        return obj, None
    return obj, np.broadcast_to(a_hat / P, values.shape).copy()


OBJECTIVES = {"cosine": _objective_and_grad, "dot": _dot_objective_and_grad}


# ---------------------------------------------------------------- image parameterisation

def _spectrum_energy(H: int, W: int):
    """Pixel energy of a unit real / imaginary coefficient of ``irfft2``."""
    kx = np.arange(W // 2 + 1)
    ky = np.arange(H)
    c = np.where((kx == 0) | ((W % 2 == 0) & (kx == W // 2)), 1.0, 2.0)[None, :]
    self_conj = (np.isin(ky, [0, H // 2] if H % 2 == 0 else [0])[:, None]
                 & (c == 1.0))
    base = c ** 2 / (H * W) ** 2
    e_re = base * np.where(self_conj, H * W, H * W / 2)
    e_im = base * np.where(self_conj, 0.0, H * W / 2)
    return e_re, e_im


@dataclass
class FourierImage:
    """``H x W x 3`` image whose coefficients live in the real-FFT domain.

    ``params`` has shape ``(2, 3, H, W//2 + 1)`` (real and imaginary parts per
    channel).  ``weights`` hold the per-coefficient scaling that gives every
    coefficient unit pixel energy; imaginary parts of self-conjugate bins
    have no effect and get weight zero.
    """

    H: int
    W: int
    params: np.ndarray = None
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        e_re, e_im = _spectrum_energy(self.H, self.W)
        with np.errstate(divide="ignore"):
            w_re = 1.0 / np.sqrt(e_re)
            w_im = np.where(e_im > 0, 1.0 / np.sqrt(np.where(e_im > 0, e_im, 1.0)), 0.0)
        self.weights = np.stack([w_re, w_im])[:, None]  # (2, 1, H, Wf)
        if self.params is None:
            self.params = np.zeros((2, 3, self.H, self.W // 2 + 1))

    @classmethod
    def random(cls, H: int, W: int, rng: np.random.Generator, std: float = 0.01) -> "FourierImage":
        img = cls(H, W)
        img.params = std * rng.standard_normal(img.params.shape)
        return img

    def raw(self, params: np.ndarray | None = None) -> np.ndarray:
        p = self.params if params is None else params
        scaled = p * self.weights
        spatial = np.fft.irfft2(scaled[0] + 1j * scaled[1], s=(self.H, self.W))
        return np.moveaxis(spatial, 0, -1)

    def raw_adjoint(self, grad_raw: np.ndarray) -> np.ndarray:
        """Gradient w.r.t. ``params`` given the gradient w.r.t. :meth:`raw`."""
        H, W = self.H, self.W
        F = np.fft.rfft2(np.moveaxis(grad_raw, -1, 0))
        c = np.where((np.arange(W // 2 + 1) == 0)
                     | ((W % 2 == 0) & (np.arange(W // 2 + 1) == W // 2)), 1.0, 2.0)
        F = F * (c / (H * W))
        return np.stack([F.real, F.imag]) * self.weights

    def image(self, params: np.ndarray | None = None) -> np.ndarray:
        return _sigmoid(self.raw(params))


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


# ---------------------------------------------------------------- jitter

@dataclass(frozen=True)
class Jitter:
    max_translation: float = 4.0
    max_rotation: float = math.radians(5.0)
    scale_range: tuple[float, float] = (0.95, 1.05)

    def __post_init__(self):
        lo, hi = self.scale_range
        if not 0 < lo <= hi < 2:
            raise ValueError("scale range must lie inside (0, 2)")

    @property
    def disabled(self) -> bool:
        return (self.max_translation == 0 and self.max_rotation == 0
                and self.scale_range == (1.0, 1.0))

    def sample(self, rng: np.random.Generator):
        t = rng.uniform(-self.max_translation, self.max_translation, size=2)
        rot = rng.uniform(-self.max_rotation, self.max_rotation)
        scale = rng.uniform(*self.scale_range)
        return t, rot, scale


NO_JITTER = Jitter(0.0, 0.0, (1.0, 1.0))


class AffineSampler:
    """Bilinear resampling ``out[p] = img[c + s R (p - c) - t]`` with edge clamping."""

    def __init__(self, H: int, W: int, translation, rotation: float, scale: float):
        self.H, self.W = H, W
        cy, cx = (H - 1) / 2, (W - 1) / 2
        y, x = np.mgrid[0:H, 0:W].astype(np.float64)
        cos, sin = math.cos(rotation), math.sin(rotation)
        dy, dx = y - cy, x - cx
        sy = cy + scale * (cos * dy + sin * dx) - translation[0]
        sx = cx + scale * (-sin * dy + cos * dx) - translation[1]
        y0, x0 = np.floor(sy), np.floor(sx)
        fy, fx = sy - y0, sx - x0
        y0 = y0.astype(np.int64)
        x0 = x0.astype(np.int64)
        ys = [np.clip(y0, 0, H - 1), np.clip(y0 + 1, 0, H - 1)]
        xs = [np.clip(x0, 0, W - 1), np.clip(x0 + 1, 0, W - 1)]
        index = np.stack([(ys[a] * W + xs[b]).ravel() for a in (0, 1) for b in (0, 1)], axis=1)
        weight = np.stack([((1 - fy) * (1 - fx)).ravel(), ((1 - fy) * fx).ravel(),
                           (fy * (1 - fx)).ravel(), (fy * fx).ravel()], axis=1)
        P = H * W
        self.matrix = sparse.csr_matrix((weight.ravel(), index.ravel(), np.arange(0, 4 * P + 1, 4)),
                                        shape=(P, P))
        self._matrix_T = self.matrix.T

    def __call__(self, img: np.ndarray) -> np.ndarray:
        return (self.matrix @ img.reshape(self.H * self.W, -1)).reshape(img.shape)

    def adjoint(self, grad: np.ndarray) -> np.ndarray:
        return (self._matrix_T @ grad.reshape(self.H * self.W, -1)).reshape(grad.shape)


# ---------------------------------------------------------------- optimisation

@dataclass(frozen=True)
class VisConfig:
    """Settings for :func:`visualize`.

    The update is ``params += step_size * g / sqrt(v)`` where ``v`` is a
    running mean (decay ``rms_decay``) of the mean squared gradient over all
    parameters, so each step has a roughly fixed global size while keeping
    the direction of plain gradient ascent.

    ``objective`` is ``"cosine"`` (mean cosine similarity, the default) or
    ``"dot"`` (mean projection onto the unit target, which rewards response
    magnitude as well as direction).
    """

    steps: int = 512
    step_size: float = 0.05
    jitter: Jitter = Jitter()
    seed: int = 0
    H: int = 128
    W: int = 128
    init_std: float = 0.01
    rms_decay: float = 0.9
    objective: str = "cosine"

    def __post_init__(self):
        if self.objective not in OBJECTIVES:
            raise ValueError(f"objective must be one of {sorted(OBJECTIVES)}, got {self.objective!r}")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if not self.step_size > 0:
            raise ValueError("step_size must be > 0")

    def to_dict(self) -> dict:
        return {"steps": self.steps, "step_size": self.step_size, "seed": self.seed,
                "H": self.H, "W": self.W, "init_std": self.init_std, "rms_decay": self.rms_decay,
                "objective": self.objective,
                "jitter": {"max_translation": self.jitter.max_translation,
                           "max_rotation": self.jitter.max_rotation,
                           "scale_range": list(self.jitter.scale_range)}}

    @classmethod
    def from_dict(cls, d: dict) -> "VisConfig":
        d = dict(d)
        j = d.pop("jitter", None)
        if j is not None:
            d["jitter"] = Jitter(j.get("max_translation", 4.0),
                                 j.get("max_rotation", math.radians(5.0)),
                                 tuple(j.get("scale_range", (0.95, 1.05))))
        return cls(**d)


@dataclass
class VisualizationResult:
    image: np.ndarray
    trace: np.ndarray
    final_objective: float | None
    coordinate: float | None = None

    @property
    def steps(self) -> int:
        return len(self.trace)

    def to_dict(self) -> dict:
        coord = None if self.coordinate is None else float(self.coordinate)
        return {"coordinate": coord, "final_objective": self.final_objective,
                "steps": self.steps}


def objective_and_param_grad(a, model, fimg: FourierImage, params: np.ndarray,
                             sampler: AffineSampler | None = None, kind: str = "cosine"):
    """Objective of the rendered (optionally jittered) image and its gradient."""
    raw = fimg.raw(params)
    img = _sigmoid(raw)
    x = sampler(img) if sampler is not None else img
    obj, g_amap = OBJECTIVES[kind](a, model.forward(x))
    g = model.backward(x, g_amap)
    if sampler is not None:
        g = sampler.adjoint(g)
    g = g * img * (1.0 - img)
    return obj, fimg.raw_adjoint(g)


def visualize(a, model, cfg: VisConfig = VisConfig(), coordinate: float | None = None
              ) -> VisualizationResult:
    a = np.asarray(a, dtype=np.float64).ravel()
    if not np.linalg.norm(a) > 0:
        raise InvalidTargetError("target activation vector must be non-zero")
    rng = np.random.default_rng(cfg.seed)
    fimg = FourierImage.random(cfg.H, cfg.W, rng, cfg.init_std)
    params = fimg.params
    v = 0.0
    trace = np.empty(cfg.steps)
    use_jitter = not cfg.jitter.disabled
    for step in range(cfg.steps):
        sampler = AffineSampler(cfg.H, cfg.W, *cfg.jitter.sample(rng)) if use_jitter else None
        obj, g = objective_and_param_grad(a, model, fimg, params, sampler, cfg.objective)
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(step)
        trace[step] = obj
        rms = np.sqrt(np.mean(g ** 2))
        v = rms ** 2 if step == 0 else cfg.rms_decay * v + (1 - cfg.rms_decay) * rms ** 2
        params = params + cfg.step_size * g / (np.sqrt(v) + 1e-12)
    fimg.params = params
    image = fimg.image()
    final = OBJECTIVES[cfg.objective](a, model.forward(image), need_grad=False)[0]
    return VisualizationResult(image, trace, float(final), coordinate)


def visualize_many(points, model, cfg: VisConfig = VisConfig(), coordinates=None,
                   threads: int = 1, skip_zero: bool = False) -> list[VisualizationResult]:
    """Visualise each row of ``points``; row ``r`` uses seed ``cfg.seed + r``.

    With ``skip_zero``, rows with zero norm (which have no direction to match,
    e.g. the origin of an NMF dimension) yield a flat grey placeholder with
    an empty trace instead of raising.
    """
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    coords = list(coordinates) if coordinates is not None else [None] * len(points)

    def one(r):
        if skip_zero and not np.linalg.norm(points[r]) > 0:
            return VisualizationResult(np.full((cfg.H, cfg.W, 3), 0.5), np.empty(0), None,
                                       coords[r])
        return visualize(points[r], model, replace(cfg, seed=cfg.seed + r), coords[r])

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, range(len(points))))
    return [one(r) for r in range(len(points))]


# ---------------------------------------------------------------- output

def to_uint8(image: np.ndarray) -> np.ndarray:
    return np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)


def render_grid(results, cols: int = 8, separator: int = 2) -> np.ndarray:
    """Tile result images row-major with ``separator`` white pixels between tiles."""
    images = [r.image if isinstance(r, VisualizationResult) else np.asarray(r) for r in results]
    if not images:
        raise ValueError("render_grid needs at least one image")
    cols = max(1, min(cols, len(images)))
    rows = math.ceil(len(images) / cols)
    h, w = images[0].shape[:2]
    grid = np.full((rows * h + (rows - 1) * separator, cols * w + (cols - 1) * separator, 3),
                   255, dtype=np.uint8)
    for n, img in enumerate(images):
        if img.shape[:2] != (h, w):
            raise ValueError("all images in a grid must share one size")
        r, c = divmod(n, cols)
        tile = to_uint8(img if img.ndim == 3 else np.repeat(img[..., None], 3, axis=2))
        grid[r * (h + separator):r * (h + separator) + h, c * (w + separator):c * (w + separator) + w] = tile
    return grid


def save_png(path, pixels: np.ndarray):
    """Write 8-bit RGB PNG atomically and return the path."""
    from PIL import Image

    if pixels.dtype != np.uint8:
        pixels = to_uint8(pixels)
    buf = io.BytesIO()
    Image.fromarray(pixels).save(buf, format="PNG")
    return atomic_write_bytes(path, buf.getvalue())
