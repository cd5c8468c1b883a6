"""Pipeline configuration: one JSON document, validated up front.

Every stage draws its seed from the master seed and the stage name, so a
single stage can be rerun in isolation and still reproduce its outputs.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .decomposition import KINDS
from .featurevis import Jitter, VisConfig
from .tuning import STRATEGIES, SampleSpec

TABLE_CELLS = tuple((kind, n) for kind in ("PCA", "ICA", "NMF", "LLE") for n in (3, 6))
EXTERNAL_CELLS = tuple((kind, 16) for kind in ("PCA", "ICA", "NMF", "LLE"))


class ConfigError(ValueError):
    """Invalid configuration value; ``field`` is the dotted config path."""

    def __init__(self, field: str, message: str):
        super().__init__(f"invalid config field '{field}': {message}")
        self.field = field


def stage_seed(master: int, stage: str) -> int:
    digest = hashlib.sha256(f"{int(master)}:{stage}".encode()).digest()
    return int.from_bytes(digest[:4], "little")


def resolve_threads(flag: int | None = None, default: int = 1) -> int:
    """``--threads`` wins, then ``TUNEDIM_THREADS``, then ``default``."""
    if flag is not None:
        value, source = flag, "--threads"
    elif os.environ.get("TUNEDIM_THREADS"):
        value, source = os.environ["TUNEDIM_THREADS"], "TUNEDIM_THREADS"
    else:
        value, source = default, "threads"
    try:
        value = int(value)
    except (TypeError, ValueError):
        raise ConfigError(source, f"expected a positive integer, got {value!r}") from None
    if value < 1:
        raise ConfigError(source, f"expected a positive integer, got {value}")
    return value


@dataclass
class ModelConfig:
    """Built-in Gabor bank or an external activation matrix.

    ``bank_seed`` is fixed rather than derived from the master seed so the
    bank stays constant while the other stages are reseeded.
    """

    kind: str = "gabor"
    count: int = 28
    kernel_size: int = 7
    stride: int = 2
    bank_seed: int = 0
    relu: bool = False
    activations: str | None = None


@dataclass
class CorpusConfig:
    kind: str = "mixed"
    n: int = 50_000
    size: int = 32
    grating_fraction: float = 0.5
    path: str | None = None


@dataclass
class VisualizeConfig:
    """Which reductions to render, and the renderer settings.

    The pipeline renders smaller, shorter optimisations than the
    :class:`~tunedim.featurevis.VisConfig` defaults to keep a full run at
    desk scale; the ``visualize`` subcommand uses the full defaults.
    """

    reductions: list[str] = field(default_factory=lambda: ["ICA-3"])
    steps: int = 256
    step_size: float = 0.05
    size: int = 64
    cols: int = 8
    objective: str = "cosine"
    jitter: dict = field(default_factory=lambda: {"max_translation": 4.0,
                                                  "max_rotation": 0.08726646259971647,
                                                  "scale_range": [0.95, 1.05]})

    def vis_config(self, seed: int) -> VisConfig:
        j = self.jitter
        return VisConfig(steps=self.steps, step_size=self.step_size, seed=seed, H=self.size,
                         W=self.size, objective=self.objective,
                         jitter=Jitter(float(j["max_translation"]), float(j["max_rotation"]),
                                       tuple(float(s) for s in j["scale_range"])))


@dataclass
class ValidateConfig:
    G: int = 100
    threshold: float = 0.7
    nmf_rectified: bool = True


@dataclass
class PipelineConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    corpus: CorpusConfig = field(default_factory=CorpusConfig)
    N: int = 50_000
    reductions: list[list] = field(default_factory=lambda: [list(c) for c in TABLE_CELLS])
    sample: dict = field(default_factory=lambda: {"m": 32, "strategy": "uniform_minmax"})
    visualize: VisualizeConfig = field(default_factory=VisualizeConfig)
    validate: ValidateConfig = field(default_factory=ValidateConfig)
    hyperparams: dict = field(default_factory=dict)
    seed: int = 0
    threads: int = 1
    out: str = "tunedim-run"

    @property
    def external(self) -> bool:
        return self.model.kind == "external"

    @property
    def sample_spec(self) -> SampleSpec:
        return SampleSpec(int(self.sample["m"]), self.sample["strategy"])

    def cells(self) -> list[tuple[str, int]]:
        return [(str(k).upper(), int(n)) for k, n in self.reductions]

    def seeds(self) -> dict[str, int]:
        return {stage: stage_seed(self.seed, stage)
                for stage in ("corpus", "collect", "reduce", "visualize")}

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict, base_dir: Path | None = None) -> "PipelineConfig":
        d = dict(d)
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(unknown[0], "unknown field")
        sections = {"model": ModelConfig, "corpus": CorpusConfig,
                    "visualize": VisualizeConfig, "validate": ValidateConfig}
        for name, section in sections.items():
            if name in d:
                value = d[name]
                if not isinstance(value, dict):
                    raise ConfigError(name, "expected an object")
                extra = sorted(set(value) - set(section.__dataclass_fields__))
                if extra:
                    raise ConfigError(f"{name}.{extra[0]}", "unknown field")
                d[name] = section(**value)
        if isinstance(d.get("model"), ModelConfig) and d["model"].kind == "external":
            d.setdefault("reductions", [list(c) for c in EXTERNAL_CELLS])
            d.setdefault("visualize", VisualizeConfig(reductions=[]))
        cfg = cls(**d)
        if base_dir is not None:
            cfg._resolve_paths(Path(base_dir))
        cfg.validate_fields()
        return cfg

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"config file {path} not found")
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError("<document>", f"not valid JSON ({exc})") from None
        if not isinstance(data, dict):
            raise ConfigError("<document>", "expected a JSON object")
        return cls.from_dict(data, base_dir=path.parent)

    def _resolve_paths(self, base: Path) -> None:
        if self.model.activations and not Path(self.model.activations).is_absolute():
            self.model.activations = str(base / self.model.activations)
        if self.corpus.path and not Path(self.corpus.path).is_absolute():
            self.corpus.path = str(base / self.corpus.path)

    def validate_fields(self) -> None:
        m = self.model
        if m.kind not in ("gabor", "external"):
            raise ConfigError("model.kind", f"expected 'gabor' or 'external', got {m.kind!r}")
        if m.kind == "external":
            if not m.activations:
                raise ConfigError("model.activations", "required for an external model")
            if not Path(m.activations).is_file():
                raise ConfigError("model.activations", f"file {m.activations} does not exist")
        else:
            for name in ("count", "kernel_size", "stride"):
                if int(getattr(m, name)) < 1:
                    raise ConfigError(f"model.{name}", "must be >= 1")
            c = self.corpus
            if c.kind not in ("mixed", "images"):
                raise ConfigError("corpus.kind", f"expected 'mixed' or 'images', got {c.kind!r}")
            if c.kind == "images" and not (c.path and Path(c.path).is_dir()):
                raise ConfigError("corpus.path", f"image directory {c.path} does not exist")
            if c.n < 1:
                raise ConfigError("corpus.n", "must be >= 1")
            if c.size < m.kernel_size + 2 * m.stride:
                raise ConfigError("corpus.size", "too small for a 3x3 activation map")
            if not 0 <= c.grating_fraction <= 1:
                raise ConfigError("corpus.grating_fraction", "must lie in [0, 1]")
            if self.N < 1:
                raise ConfigError("N", "must be >= 1")
        if not self.reductions:
            raise ConfigError("reductions", "need at least one (kind, n) pair")
        for i, cell in enumerate(self.reductions):
            if not (isinstance(cell, (list, tuple)) and len(cell) == 2):
                raise ConfigError(f"reductions[{i}]", "expected a [kind, n] pair")
            kind, n = cell
            if str(kind).upper() not in KINDS:
                raise ConfigError(f"reductions[{i}]", f"unknown kind {kind!r}")
            if not isinstance(n, int) or n < 1:
                raise ConfigError(f"reductions[{i}]", f"n must be a positive integer, got {n!r}")
        for key in self.hyperparams:
            if key.upper() not in KINDS:
                raise ConfigError(f"hyperparams.{key}", "unknown reduction kind")
        s = self.sample
        if set(s) - {"m", "strategy"}:
            raise ConfigError(f"sample.{sorted(set(s) - {'m', 'strategy'})[0]}", "unknown field")
        if not isinstance(s.get("m"), int) or s["m"] < 2:
            raise ConfigError("sample.m", f"m must be an integer >= 2, got {s.get('m')!r}")
        if s.get("strategy") not in STRATEGIES:
            raise ConfigError("sample.strategy", f"expected one of {STRATEGIES}")
        v = self.visualize
        names = {f"{k}-{n}" for k, n in self.cells()}
        for name in v.reductions:
            if name not in names:
                raise ConfigError("visualize.reductions", f"{name!r} is not in reductions")
        try:
            v.vis_config(0)
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError("visualize", str(exc)) from None
        if v.cols < 1:
            raise ConfigError("visualize.cols", "must be >= 1")
        if self.validate.G < 50:
            raise ConfigError("validate.G", "sweep grid size must be >= 50")
        if not 0 < self.validate.threshold <= 1:
            raise ConfigError("validate.threshold", "must lie in (0, 1]")
        if self.threads < 1:
            raise ConfigError("threads", "must be >= 1")
