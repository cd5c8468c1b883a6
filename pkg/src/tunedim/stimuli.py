"""Stimulus generators: sinusoidal gratings, 1/f noise and PNG folders."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

logger = logging.getLogger(__name__)

CORPUS_FREQUENCY_RANGE = (0.05, 0.45)
SWEEP_FREQUENCY_RANGE = (0.1, 0.4)


class AliasingError(ValueError):
    pass


def grating(freq: float, theta: float, psi: float, contrast: float = 1.0,
            H: int = 32, W: int = 32, origin: tuple[float, float] = (0.0, 0.0)) -> np.ndarray:
    """Sinusoidal grating, ``H x W x 3`` in ``[0, 1]``.

    Pixel ``(x, y)`` (column, row) is
    ``0.5 + 0.5 * contrast * cos(2 pi freq (x' cos theta + y' sin theta) + psi)``
    where ``(x', y') = (x, y) - origin``.
    """
    if not 0 < freq <= 0.5:
        if freq > 0.5:
            raise AliasingError(f"frequency {freq} exceeds the Nyquist limit 0.5")
        raise ValueError(f"frequency must be > 0, got {freq}")
    if not 0 <= contrast <= 1:
        raise ValueError(f"contrast must lie in [0, 1], got {contrast}")
    x0, y0 = origin
    y, x = np.mgrid[0:H, 0:W].astype(np.float64)
    phase = 2 * math.pi * freq * ((x - x0) * math.cos(theta) + (y - y0) * math.sin(theta)) + psi
    img = 0.5 + 0.5 * contrast * np.cos(phase)
    return np.repeat(img[:, :, None], 3, axis=2)


def pink_noise(H: int = 32, W: int = 32, seed: int = 0) -> np.ndarray:
    """Grayscale noise with amplitude spectrum ``1/|f|``, min-max scaled to [0, 1]."""
    rng = np.random.default_rng(seed)
    spectrum = np.fft.rfft2(rng.standard_normal((H, W)))
    fy = np.fft.fftfreq(H)[:, None]
    fx = np.fft.rfftfreq(W)[None, :]
    radius = np.hypot(fy, fx)
    radius[0, 0] = np.inf
    img = np.fft.irfft2(spectrum / radius, s=(H, W))
    lo, hi = img.min(), img.max()
    img = (img - lo) / (hi - lo) if hi > lo else np.full_like(img, 0.5)
    return np.repeat(img[:, :, None], 3, axis=2)


@dataclass(frozen=True)
class StimulusSpec:
    kind: str
    H: int = 32
    W: int = 32
    seed: int | None = None
    freq: float | None = None
    theta: float | None = None
    psi: float | None = None
    contrast: float | None = None
    path: str | None = None

    def render(self) -> np.ndarray:
        if self.kind == "grating":
            return grating(self.freq, self.theta, self.psi, self.contrast, self.H, self.W)
        if self.kind == "pink_noise":
            return pink_noise(self.H, self.W, self.seed)
        if self.kind == "image_file":
            return _read_png(Path(self.path), (self.H, self.W))
        raise ValueError(f"unknown stimulus kind {self.kind!r}")

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}


class Corpus(Sequence):
    """An indexable, lazily rendered list of stimuli."""

    def __init__(self, specs: Sequence[StimulusSpec]):
        self.specs = list(specs)

    def __len__(self):
        return len(self.specs)

    def __getitem__(self, i):
        return self.specs[i].render()

    def manifest(self) -> dict:
        return {"stimuli": [s.to_dict() for s in self.specs]}

    @classmethod
    def from_manifest(cls, manifest: dict) -> "Corpus":
        return cls([StimulusSpec(**d) for d in manifest["stimuli"]])


def mixed_corpus(n: int, size: int = 32, seed: int = 0, grating_fraction: float = 0.5,
                 freq_range: tuple[float, float] = CORPUS_FREQUENCY_RANGE) -> Corpus:
    """Half pink noise, half random full-contrast-range gratings (by default).

    Kinds are assigned in a seeded random order; every grating parameter is
    uniform (orientation over ``[0, pi)``, phase over ``[-pi, pi)``).
    """
    rng = np.random.default_rng(seed)
    n_grating = int(round(n * grating_fraction))
    kinds = np.array(["grating"] * n_grating + ["pink_noise"] * (n - n_grating))
    rng.shuffle(kinds)
    noise_seeds = rng.integers(0, 2 ** 63, size=n)
    freqs = rng.uniform(*freq_range, size=n)
    thetas = rng.uniform(0, math.pi, size=n)
    psis = rng.uniform(-math.pi, math.pi, size=n)
    contrasts = rng.uniform(0.2, 1.0, size=n)
    specs = []
    for i, kind in enumerate(kinds):
        if kind == "grating":
            specs.append(StimulusSpec("grating", size, size, freq=float(freqs[i]),
                                      theta=float(thetas[i]), psi=float(psis[i]),
                                      contrast=float(contrasts[i])))
        else:
            specs.append(StimulusSpec("pink_noise", size, size, seed=int(noise_seeds[i])))
    return Corpus(specs)


def _read_png(path: Path, size: tuple[int, int] | None) -> np.ndarray:
    from PIL import Image

    with Image.open(path) as im:
        im = im.convert("RGB")
        if size is not None and im.size != (size[1], size[0]):
            w, h = im.size
            target = size[1] / size[0]
            if w / h > target:
                new_w = int(round(h * target))
                left = (w - new_w) // 2
                im = im.crop((left, 0, left + new_w, h))
            else:
                new_h = int(round(w / target))
                top = (h - new_h) // 2
                im = im.crop((0, top, w, top + new_h))
            im = im.resize((size[1], size[0]), Image.BILINEAR)
        return np.asarray(im, dtype=np.float64) / 255.0


@dataclass
class ImageFolder:
    """Iterate over the PNG images of a directory in sorted filename order.

    Files that cannot be decoded are skipped with a logged warning and
    counted in ``skipped``; ``loaded`` counts successful reads.
    """

    directory: Path
    size: tuple[int, int] | None = None
    loaded: int = 0
    skipped: int = 0
    skipped_files: list[str] = field(default_factory=list)

    def __iter__(self) -> Iterator[np.ndarray]:
        self.loaded = self.skipped = 0
        self.skipped_files = []
        for path in sorted(p for p in Path(self.directory).iterdir() if p.is_file()):
            try:
                img = _read_png(path, self.size)
            except Exception as exc:  # PIL raises a zoo of types for bad files
                logger.warning("skipping unreadable image %s: %s", path.name, exc)
                self.skipped += 1
                self.skipped_files.append(path.name)
                continue
            self.loaded += 1
            yield img


def load_images(directory, size: tuple[int, int] | None = None) -> ImageFolder:
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"image directory {directory} does not exist")
    return ImageFolder(directory, size)


def image_corpus(directory, size: tuple[int, int]) -> Corpus:
    paths = sorted(p for p in Path(directory).iterdir() if p.suffix.lower() == ".png")
    return Corpus([StimulusSpec("image_file", size[0], size[1], path=str(p)) for p in paths])
