"""``tunedim`` command line.

Each subcommand wraps one stage with file inputs and outputs; ``run``
executes the whole pipeline from a config.  Settings come from ``--config``
(or the built-in defaults) and explicit flags override them.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import activations as act
from . import featurevis as fv
from ._io import atomic_write_text, sha256_file, write_json
from .config import ConfigError, PipelineConfig, resolve_threads, stage_seed
from .decomposition import load_model, make_reducer, save_model
from .filterbank import FilterBank, build_gabor_bank
from .npyio import NpyFormatError, load_npy, save_npy
from .pipeline import build_bank, build_corpus, run_pipeline
from .tuning import SampleSpec, TuningDimension, sample_all, sample_dimension
from .validate import DEFAULT_THRESHOLD, IdentificationReport, report_from_models

logger = logging.getLogger("tunedim")


def _config(args) -> PipelineConfig:
    cfg = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def _require(path, producer: str) -> Path:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"{path} not found (produce it with `tunedim {producer}`)")
    return path


def _load_bank(path, cfg: PipelineConfig) -> FilterBank:
    if path is None:
        return build_bank(cfg)
    _require(Path(path) / "bank_weights.npy", "gen-bank")
    return FilterBank.load(path)


def _emit(paths) -> None:
    """Print the written artifacts with their hashes, one JSON object per line."""
    for p in (paths.values() if isinstance(paths, dict) else paths):
        print(json.dumps({"path": str(p), "sha256": sha256_file(p)}))


def cmd_gen_bank(args) -> int:
    cfg = _config(args)
    m = cfg.model
    bank = build_gabor_bank(args.count or m.count, args.kernel_size or m.kernel_size,
                            args.stride or m.stride,
                            m.bank_seed if args.bank_seed is None else args.bank_seed,
                            args.relu or m.relu)
    _emit(bank.save(args.out or "bank"))
    return 0


def cmd_collect(args) -> int:
    cfg = _config(args)
    if args.n_stimuli is not None:
        cfg.corpus.n = args.n_stimuli
    bank = _load_bank(args.bank, cfg)
    if args.relu:
        bank = bank.with_relu(True)
    corpus = build_corpus(cfg, stage_seed(cfg.seed, "corpus"))
    N = args.N or cfg.N
    A = act.collect(bank, corpus, N, stage_seed(cfg.seed, "collect"), resolve_threads(args.threads, cfg.threads))
    _emit(act.save_activations(args.out or "activations.npy", A))
    return 0


def cmd_reduce(args) -> int:
    cfg = _config(args)
    X = act.load_activations(args.activations).data
    hp = json.loads(args.hyperparams) if args.hyperparams else {}
    model = make_reducer(args.kind, args.n, stage_seed(cfg.seed, "reduce"), **hp)
    scores = model.fit_transform(X)
    out = Path(args.out or f"models/{model.kind}-{args.n}")
    paths = save_model(model, out)
    paths["scores"] = save_npy(out / "scores.npy", scores)
    _emit(paths)
    print(json.dumps({"diagnostics": model.diagnostics_}))
    return 0


def cmd_sample(args) -> int:
    model_dir = Path(args.model)
    model = load_model(model_dir)
    scores_path = _require(model_dir / "scores.npy", "reduce")
    scores = load_npy(scores_path, ndim=2)
    spec = SampleSpec(args.m, args.strategy)
    dims = [sample_dimension(model, scores, args.dim, spec)] if args.dim is not None else \
        sample_all(model, scores, spec)
    out = Path(args.out or f"samples/{model_dir.name}")
    out.mkdir(parents=True, exist_ok=True)
    for dim in dims:
        _emit(dim.save(out / f"dim{dim.d}.npy"))
    return 0


def cmd_visualize(args) -> int:
    cfg = _config(args)
    dim = TuningDimension.load(_require(args.points, "sample"))
    bank = _load_bank(args.bank, cfg)
    if args.relu:
        bank = bank.with_relu(True)
    vc = fv.VisConfig(steps=args.steps, step_size=args.step_size, seed=cfg.seed,
                      H=args.size, W=args.size, objective=args.objective)
    results = fv.visualize_many(dim.activation_points, bank, vc, dim.coordinates,
                                resolve_threads(args.threads, cfg.threads), skip_zero=True)
    out = Path(args.out or "vis")
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for r, res in enumerate(results):
        paths.append(fv.save_png(out / f"point{r:02d}.png", res.image))
        paths.append(write_json(out / f"point{r:02d}.json", res.to_dict()))
    paths.append(fv.save_png(out / "grid.png", fv.render_grid(results, cols=args.cols)))
    _emit(paths)
    return 0


def cmd_validate(args) -> int:
    cfg = _config(args)
    bank = _load_bank(args.bank, cfg)
    root = Path(args.models)
    if not root.is_dir():
        raise FileNotFoundError(f"model directory {root} not found (produce it with `tunedim reduce`)")
    dirs = sorted(p for p in root.iterdir() if (p / "model.json").exists())
    if not dirs:
        raise FileNotFoundError(f"no fitted models under {root} (produce them with `tunedim reduce`)")
    models = {}
    for d in dirs:
        model = load_model(d)
        models[(model.kind, model.n_components_)] = model
    order = {"PCA": 0, "ICA": 1, "NMF": 2, "LLE": 3}
    models = dict(sorted(models.items(), key=lambda kv: (order[kv[0][0]], kv[0][1])))
    sweep_banks = {} if (args.nmf_linear or bank.apply_relu) else {"NMF": bank.with_relu(True)}
    report = report_from_models(models, bank, args.threshold, args.G, cfg.corpus.size,
                                {"G": args.G, "models": [d.name for d in dirs]}, sweep_banks)
    out = Path(args.out or "report")
    out.mkdir(parents=True, exist_ok=True)
    md = report.to_markdown()
    _emit([write_json(out / "report.json", report.to_dict()), atomic_write_text(out / "report.md", md)])
    sys.stderr.write(md)
    return 0


def cmd_report(args) -> int:
    path = _require(args.report, "validate")
    data = json.loads(path.read_text())
    if data.get("status") == "skipped":
        text = f"Validation skipped: {data.get('reason', '')}\n"
    else:
        report = IdentificationReport(data["threshold"], data["cells"], data.get("meta", {}))
        text = report.to_markdown()
    if args.out:
        atomic_write_text(args.out, text)
        _emit([Path(args.out)])
    else:
        sys.stdout.write(text)
    return 0


def cmd_run(args) -> int:
    cfg = _config(args)
    status, manifest = run_pipeline(cfg, out=args.out, threads=args.threads)
    if manifest["failure"]:
        sys.stderr.write(f"pipeline failed in stage {manifest['failure']['stage']}: "
                         f"{manifest['failure']['error']}\n")
    print(json.dumps({"status": manifest["status"], "stages": manifest["stages"],
                      "artifacts": len(manifest["artifacts"])}))
    return status


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="pipeline config JSON")
    p.add_argument("--out", help="output path")
    p.add_argument("--seed", type=int, help="master seed (overrides the config)")
    p.add_argument("--threads", type=int, help="worker threads (fallback: TUNEDIM_THREADS)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tunedim",
                                     description="Find and visualise tuning dimensions of a layer.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-bank", help="build and save a Gabor filter bank")
    _common(p)
    p.add_argument("--count", type=int)
    p.add_argument("--kernel-size", type=int)
    p.add_argument("--stride", type=int)
    p.add_argument("--bank-seed", type=int)
    p.add_argument("--relu", action="store_true")
    p.set_defaults(func=cmd_gen_bank)

    p = sub.add_parser("collect", help="sample activation vectors from a corpus")
    _common(p)
    p.add_argument("--bank", help="bank directory (default: built-in bank from the config)")
    p.add_argument("--N", type=int, dest="N", help="number of activation vectors")
    p.add_argument("--n-stimuli", type=int, help="corpus size")
    p.add_argument("--relu", action="store_true", help="rectify the bank's outputs")
    p.set_defaults(func=cmd_collect)

    p = sub.add_parser("reduce", help="fit one reduction to saved activations")
    _common(p)
    p.add_argument("--activations", required=True)
    p.add_argument("--kind", required=True, type=str.upper, choices=["PCA", "ICA", "NMF", "LLE"])
    p.add_argument("--n", required=True, type=int)
    p.add_argument("--hyperparams", help="JSON object of estimator parameters")
    p.set_defaults(func=cmd_reduce)

    p = sub.add_parser("sample", help="sample points along each component of a model")
    _common(p)
    p.add_argument("--model", required=True, help="model directory written by reduce")
    p.add_argument("--m", type=int, default=32)
    p.add_argument("--strategy", default="uniform_minmax",
                   choices=["uniform_minmax", "equal_proportion"])
    p.add_argument("--dim", type=int, help="only this component")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("visualize", help="render sampled points through a built-in bank")
    _common(p)
    p.add_argument("--points", required=True, help="dimension NPY written by sample")
    p.add_argument("--bank", help="bank directory (default: built-in bank from the config)")
    p.add_argument("--relu", action="store_true")
    p.add_argument("--steps", type=int, default=512)
    p.add_argument("--step-size", type=float, default=0.05)
    p.add_argument("--size", type=int, default=128)
    p.add_argument("--cols", type=int, default=8)
    p.add_argument("--objective", default="cosine", choices=sorted(fv.OBJECTIVES))
    p.set_defaults(func=cmd_visualize)

    p = sub.add_parser("validate", help="sweep gratings through fitted models")
    _common(p)
    p.add_argument("--models", required=True, help="directory of model subdirectories")
    p.add_argument("--bank", help="bank directory (default: built-in bank from the config)")
    p.add_argument("--G", type=int, dest="G", default=100)
    p.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    p.add_argument("--nmf-linear", action="store_true",
                   help="sweep NMF through the linear bank instead of its rectified twin")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("report", help="print a validation report as a Markdown table")
    _common(p)
    p.add_argument("--report", required=True, help="report.json written by validate or run")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("run", help="run the whole pipeline from a config")
    _common(p)
    p.set_defaults(func=cmd_run)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        sys.stderr.write(f"tunedim: {exc}\n")
        return 2
    except (FileNotFoundError, NpyFormatError, ValueError) as exc:
        sys.stderr.write(f"tunedim {args.command}: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
