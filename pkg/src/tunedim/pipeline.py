"""End-to-end run: collect, reduce, sample, visualize and validate.

Artifacts land under one output directory.  ``manifest.json`` lists each
artifact with its SHA-256 and, on failure, the stage that broke.  Nothing
time- or machine-dependent is written, so two runs of one config yield
byte-identical NPY and JSON files.
"""

from __future__ import annotations

import json
import logging
import time
from pathlib import Path

from . import activations as act
from . import featurevis as fv
from ._io import atomic_write_text, sha256_file, write_json
from .config import PipelineConfig, resolve_threads, stage_seed
from .decomposition import make_reducer, save_model
from .filterbank import FilterBank, build_gabor_bank
from .npyio import save_npy
from .stimuli import Corpus, image_corpus, mixed_corpus
from .tuning import sample_all
from .validate import report_from_models

logger = logging.getLogger(__name__)


class Manifest:
    """Artifact list keyed by path relative to the output directory."""

    def __init__(self, root: Path, config: dict):
        self.root = Path(root)
        self.config = config
        self.artifacts: dict[str, dict] = {}
        self.stages: list[str] = []
        self.failure: dict | None = None

    def add(self, path, stage: str) -> Path:
        path = Path(path)
        rel = path.resolve().relative_to(self.root.resolve()).as_posix()
        self.artifacts[rel] = {"path": rel, "stage": stage, "sha256": sha256_file(path),
                               "bytes": path.stat().st_size}
        return path

    def add_all(self, paths, stage: str) -> None:
        for p in (paths.values() if isinstance(paths, dict) else paths):
            self.add(p, stage)

    def to_dict(self) -> dict:
        return {"status": "failed" if self.failure else "ok", "config": self.config,
                "stages": self.stages, "failure": self.failure,
                "artifacts": [self.artifacts[k] for k in sorted(self.artifacts)]}

    def write(self) -> Path:
        return write_json(self.root / "manifest.json", self.to_dict())


def build_bank(cfg: PipelineConfig) -> FilterBank:
    m = cfg.model
    return build_gabor_bank(m.count, m.kernel_size, m.stride, m.bank_seed, m.relu)


def build_corpus(cfg: PipelineConfig, seed: int) -> Corpus:
    c = cfg.corpus
    if c.kind == "images":
        return image_corpus(c.path, (c.size, c.size))
    return mixed_corpus(c.n, c.size, seed, c.grating_fraction)


def uses_rectified(cfg: PipelineConfig, kind: str) -> bool:
    return (kind == "NMF" and not cfg.external and cfg.validate.nmf_rectified
            and not cfg.model.relu)


def run_pipeline(config: PipelineConfig | str | Path, out: str | Path | None = None,
                 seed: int | None = None, threads: int | None = None) -> tuple[int, dict]:
    """Run every stage and return ``(exit_status, manifest)``.

    ``out``, ``seed`` and ``threads`` override the config.  A stage failure
    stops the run, records the failure in the manifest and returns 1.
    """
    cfg = config if isinstance(config, PipelineConfig) else PipelineConfig.load(config)
    if seed is not None:
        cfg.seed = int(seed)
    threads = resolve_threads(threads, cfg.threads)
    root = Path(out if out is not None else cfg.out)
    root.mkdir(parents=True, exist_ok=True)
    recorded = cfg.to_dict()
    recorded.pop("out")
    recorded.pop("threads")
    manifest = Manifest(root, recorded)
    manifest.config["stage_seeds"] = cfg.seeds()
    state: dict = {}
    stages = [("collect", _collect), ("reduce", _reduce), ("sample", _sample),
              ("visualize", _visualize), ("validate", _validate)]
    for name, fn in stages:
        t0 = time.perf_counter()
        try:
            ran = fn(cfg, root, manifest, state, threads)
        except Exception as exc:
            logger.exception("stage %s failed", name)
            manifest.failure = {"stage": name, "error": f"{type(exc).__name__}: {exc}"}
            manifest.write()
            return 1, manifest.to_dict()
        if ran:
            manifest.stages.append(name)
        logger.info("%s done in %.1fs", name, time.perf_counter() - t0)
    manifest.write()
    return 0, manifest.to_dict()


def _collect(cfg, root, manifest, state, threads) -> bool:
    seeds = cfg.seeds()
    if cfg.external:
        state["X"] = act.load_activations(cfg.model.activations).data
        return False
    bank = build_bank(cfg)
    state["bank"] = bank
    manifest.add_all(bank.save(root / "bank"), "collect")
    corpus = build_corpus(cfg, seeds["corpus"])
    manifest.add(write_json(root / "corpus.json", corpus.manifest()), "collect")
    A = act.collect(bank, corpus, cfg.N, seeds["collect"], threads)
    state["X"] = A.data
    manifest.add_all(act.save_activations(root / "activations.npy", A), "collect")
    if any(uses_rectified(cfg, k) for k, _ in cfg.cells()):
        R = act.collect(bank.with_relu(True), corpus, cfg.N, seeds["collect"], threads,
                        layer_id="bank_relu")
        state["X_rectified"] = R.data
        manifest.add_all(act.save_activations(root / "activations_rectified.npy", R), "collect")
    return True


def _reduce(cfg, root, manifest, state, threads) -> bool:
    seed = cfg.seeds()["reduce"]
    hp = {k.upper(): v for k, v in cfg.hyperparams.items()}
    state["models"], state["scores"] = {}, {}
    for kind, n in cfg.cells():
        X = state["X_rectified"] if uses_rectified(cfg, kind) else state["X"]
        model = make_reducer(kind, n, seed, **hp.get(kind, {}))
        scores = model.fit_transform(X)
        name = f"{kind}-{n}"
        directory = root / "models" / name
        manifest.add_all(save_model(model, directory), "reduce")
        manifest.add(save_npy(directory / "scores.npy", scores), "reduce")
        state["models"][name] = model
        state["scores"][name] = scores
    return True


def _sample(cfg, root, manifest, state, threads) -> bool:
    state["samples"] = {}
    for name, model in state["models"].items():
        dims = sample_all(model, state["scores"][name], cfg.sample_spec)
        directory = root / "samples" / name
        directory.mkdir(parents=True, exist_ok=True)
        for dim in dims:
            manifest.add_all(dim.save(directory / f"dim{dim.d}.npy"), "sample")
        state["samples"][name] = dims
    return True


def _visualize(cfg, root, manifest, state, threads) -> bool:
    if cfg.external:
        return False
    v = cfg.visualize
    for name in v.reductions:
        model = state["bank"].with_relu(True) if uses_rectified(cfg, name.split("-")[0]) else state["bank"]
        for dim in state["samples"][name]:
            directory = root / "vis" / name / f"dim{dim.d}"
            directory.mkdir(parents=True, exist_ok=True)
            vc = v.vis_config(stage_seed(cfg.seed, f"visualize/{name}/{dim.d}"))
            results = fv.visualize_many(dim.activation_points, model, vc, dim.coordinates, threads,
                                          skip_zero=True)
            for r, res in enumerate(results):
                manifest.add(fv.save_png(directory / f"point{r:02d}.png", res.image), "visualize")
                manifest.add(write_json(directory / f"point{r:02d}.json", res.to_dict()), "visualize")
            grid = fv.render_grid(results, cols=v.cols)
            manifest.add(fv.save_png(root / "vis" / name / f"dim{dim.d}_grid.png", grid), "visualize")
    return True


def _validate(cfg, root, manifest, state, threads) -> bool:
    if cfg.external:
        stub = {"status": "skipped",
                "reason": "tuning-parameter validation needs the built-in bank",
                "models": sorted(state["models"])}
        manifest.add(write_json(root / "report.json", stub), "validate")
        manifest.add(atomic_write_text(root / "report.md", "Validation skipped: external "
                                       "activations have no known tuning parameters.\n"),
                     "validate")
        return False
    bank = state["bank"]
    models = {(k, n): state["models"][f"{k}-{n}"] for k, n in cfg.cells()}
    sweep_banks = {"NMF": bank.with_relu(True)} if uses_rectified(cfg, "NMF") else {}
    meta = {"N": cfg.N, "G": cfg.validate.G, "stage_seeds": cfg.seeds(),
            "nmf_activations": "rectified" if sweep_banks or cfg.model.relu else "linear",
            "diagnostics": {f"{k}-{n}": m.diagnostics_ for (k, n), m in models.items()}}
    report = report_from_models(models, bank, cfg.validate.threshold, cfg.validate.G,
                                cfg.corpus.size, meta, sweep_banks)
    manifest.add(write_json(root / "report.json", report.to_dict()), "validate")
    manifest.add(atomic_write_text(root / "report.md", report.to_markdown()), "validate")
    state["report"] = report
    return True


def verify_manifest(root) -> list[str]:
    """Paths whose file is missing or whose hash no longer matches."""
    root = Path(root)
    data = json.loads((root / "manifest.json").read_text())
    bad = []
    for entry in data["artifacts"]:
        p = root / entry["path"]
        if not p.exists() or sha256_file(p) != entry["sha256"]:
            bad.append(entry["path"])
    return bad


__all__ = ["Manifest", "run_pipeline", "verify_manifest", "build_bank", "build_corpus"]
