"""Quantitative check of which known tuning parameters a reduction recovers.

A sweep renders gratings that vary one parameter, reads the bank's
activation at the centre of the map, projects it with the fitted reducer
and correlates every component score with the varied parameter: Pearson
for frequency, circular-linear for orientation (period pi) and phase
(period 2 pi).  A parameter counts as identified when its best |r| reaches
the threshold.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import activations as act
from .circstats import circular_linear_corr, pearson
from .decomposition import make_reducer
from .filterbank import FilterBank
from .stimuli import SWEEP_FREQUENCY_RANGE, grating

logger = logging.getLogger(__name__)

PARAMETERS = ("frequency", "angle", "phase")
DEFAULT_THRESHOLD = 0.7
SWEEP_FIXED = {"frequency": 0.25, "angle": math.pi / 4, "phase": 0.0}
PERIODS = {"angle": math.pi, "phase": 2 * math.pi}
TABLE_PARAMETER_NAMES = {"frequency": "Frequency", "angle": "Angle", "phase": "Phase"}


@dataclass
class SweepResult:
    parameter: str
    scores_r: list[float]
    best_component: int
    best_r: float

    def to_dict(self) -> dict:
        return {"parameter": self.parameter, "r": self.scores_r,
                "best_component": self.best_component, "best_r": self.best_r}


def sweep_values(parameter: str, G: int) -> np.ndarray:
    if parameter == "frequency":
        return np.linspace(*SWEEP_FREQUENCY_RANGE, G)
    if parameter == "angle":
        return np.linspace(0.0, math.pi, G, endpoint=False)
    if parameter == "phase":
        return np.linspace(-math.pi, math.pi, G, endpoint=False)
    raise ValueError(f"unknown parameter {parameter!r}; expected one of {PARAMETERS}")


def sweep_stimuli(parameter: str, G: int) -> np.ndarray:
    """``G x 3`` table of (frequency, angle, phase), varying only ``parameter``."""
    values = sweep_values(parameter, G)
    table = np.tile([SWEEP_FIXED[p] for p in PARAMETERS], (G, 1))
    table[:, PARAMETERS.index(parameter)] = values
    return table


def correlate_scores(parameter: str, values, scores) -> np.ndarray:
    """|r| of each score column against the swept parameter values."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim == 1:
        scores = scores[:, None]
    if parameter == "frequency":
        rs = [abs(pearson(values, scores[:, d])) for d in range(scores.shape[1])]
    else:
        rs = [circular_linear_corr(values, scores[:, d], PERIODS[parameter])
              for d in range(scores.shape[1])]
    return np.array(rs)


def sweep_activations(bank: FilterBank, stimuli: np.ndarray, size: int = 32) -> np.ndarray:
    """Activation vector at the centre of the map for each grating in ``stimuli``.

    Grating coordinates are centred on that position's receptive field, so
    at phase 0 a grating is even-symmetric about it for every orientation.
    """
    h, w = bank.output_shape(size, size)
    ci, cj = (h - 1) // 2, (w - 1) // 2
    cy, cx = bank.receptive_field(ci, cj)
    rows = [bank.forward(grating(f, t, p, 1.0, size, size, origin=(cx, cy))).values[ci, cj]
            for f, t, p in stimuli]
    return np.array(rows)


class GroundTruthScores:
    """Cheat "reducer" whose scores are the stimulus parameters themselves.

    Circular parameters are given as their (cos, sin) pair at the
    parameter's period, the lossless linear-score form of an angle, so the
    scores are ``[freq, cos 2theta, sin 2theta, cos psi, sin psi]``.  Used
    only to validate the identification oracle.
    """

    n_components_ = 5
    kind = "TRUTH"

    def scores_from_stimuli(self, stimuli: np.ndarray) -> np.ndarray:
        f, theta, psi = np.asarray(stimuli, dtype=np.float64).T
        a = 2 * math.pi * theta / PERIODS["angle"]
        return np.column_stack([f, np.cos(a), np.sin(a), np.cos(psi), np.sin(psi)])


def sweep(model, bank: FilterBank, parameter: str, G: int = 100, size: int = 32) -> SweepResult:
    if G < 50:
        raise ValueError(f"sweep grid size must be >= 50, got {G}")
    stimuli = sweep_stimuli(parameter, G)
    values = stimuli[:, PARAMETERS.index(parameter)]
    if hasattr(model, "scores_from_stimuli"):
        scores = model.scores_from_stimuli(stimuli)
    else:
        scores = model.transform(sweep_activations(bank, stimuli, size))
    rs = correlate_scores(parameter, values, scores)
    best = int(np.argmax(rs))
    return SweepResult(parameter, [float(r) for r in rs], best, float(rs[best]))


@dataclass
class IdentificationReport:
    threshold: float
    cells: list[dict] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"threshold": self.threshold, "cells": self.cells, "meta": self.meta}

    def cell(self, method: str, n: int, parameter: str) -> dict:
        for c in self.cells:
            if c["method"] == method and c["n"] == n and c["parameter"] == parameter:
                return c
        raise KeyError((method, n, parameter))

    def columns(self) -> list[tuple[str, int]]:
        seen = []
        for c in self.cells:
            key = (c["method"], c["n"])
            if key not in seen:
                seen.append(key)
        return seen

    def to_markdown(self) -> str:
        cols = self.columns()
        header = "| Tuning Dimension | " + " | ".join(f"{m}-{n}" for m, n in cols) + " |"
        lines = [header, "|" + "---|" * (len(cols) + 1)]
        for p in PARAMETERS:
            row = [TABLE_PARAMETER_NAMES[p]]
            for m, n in cols:
                c = self.cell(m, n, p)
                if c.get("failed"):
                    row.append("failed")
                else:
                    mark = "✓" if c["identified"] else "✗"
                    row.append(f"{mark} ({c['best_r']:.2f})")
            lines.append("| " + " | ".join(row) + " |")
        lines.append("")
        lines.append(f"Identified when best |r| >= {self.threshold}.")
        return "\n".join(lines) + "\n"


def report_from_models(models: dict, bank: FilterBank, threshold: float = DEFAULT_THRESHOLD,
                       G: int = 100, size: int = 32, meta: dict | None = None,
                       sweep_banks: dict | None = None) -> IdentificationReport:
    """Sweep every fitted model in ``models`` (keyed by ``(method, n)``).

    A value in ``models`` may be an exception instance, which marks the cell failed.
    ``sweep_banks`` optionally overrides the bank used per method (e.g. the
    rectified twin for NMF).
    """
    sweep_banks = sweep_banks or {}
    report = IdentificationReport(threshold, meta=dict(meta or {}))
    for (method, n), model in models.items():
        for parameter in PARAMETERS:
            cell = {"method": method, "n": n, "parameter": parameter}
            if isinstance(model, Exception):
                cell.update(failed=True, error=f"{type(model).__name__}: {model}",
                            identified=False, best_r=None, best_component=None)
            else:
                try:
                    res = sweep(model, sweep_banks.get(method, bank), parameter, G, size)
                except Exception as exc:
                    logger.exception("sweep failed for %s-%d %s", method, n, parameter)
                    cell.update(failed=True, error=f"{type(exc).__name__}: {exc}",
                                identified=False, best_r=None, best_component=None)
                else:
                    cell.update(identified=bool(res.best_r >= threshold), best_r=res.best_r,
                                best_component=res.best_component, r=res.scores_r)
            report.cells.append(cell)
    return report


def build_report(bank: FilterBank, corpus, methods=("PCA", "ICA", "NMF", "LLE"),
                 n_values=(3, 6), threshold: float = DEFAULT_THRESHOLD, N: int = 50_000,
                 G: int = 100, seed: int = 0, collect_seed: int | None = None,
                 nmf_rectified: bool = True, hyperparams: dict | None = None,
                 activations: np.ndarray | None = None,
                 rectified_activations: np.ndarray | None = None) -> IdentificationReport:
    """Collect, fit every (method, n) cell and sweep all three parameters.

    NMF needs non-negative activations; with ``nmf_rectified`` its cells are
    fitted on the same stimuli and positions passed through the rectified
    twin of ``bank`` (and swept through it).  Otherwise NMF cells fail
    with the reducer's domain error.  Per-cell failures never abort the run.
    """
    hyperparams = hyperparams or {}
    collect_seed = seed if collect_seed is None else collect_seed
    size = np.asarray(corpus[0]).shape[0]
    t0 = time.perf_counter()
    if activations is None:
        activations = act.collect(bank, corpus, N, collect_seed).data
    relu_bank = bank.with_relu(True)
    if "NMF" in methods and nmf_rectified and not bank.apply_relu and rectified_activations is None:
        rectified_activations = act.collect(relu_bank, corpus, N, collect_seed).data
    models = {}
    for method in methods:
        for n in n_values:
            X = rectified_activations if (method == "NMF" and nmf_rectified
                                          and not bank.apply_relu) else activations
            try:
                models[(method, n)] = make_reducer(method, n, seed, **hyperparams.get(method, {})).fit(X)
            except Exception as exc:
                logger.warning("fit failed for %s-%d: %s", method, n, exc)
                models[(method, n)] = exc
    meta = {"seeds": {"fit": seed, "collect": collect_seed}, "N": int(activations.shape[0]),
            "G": G, "n_values": list(n_values), "methods": list(methods),
            "bank_relu": bool(bank.apply_relu),
            "nmf_activations": "rectified" if (nmf_rectified or bank.apply_relu) else "linear",
            "diagnostics": {f"{m}-{n}": (None if isinstance(mod, Exception) else mod.diagnostics_)
                            for (m, n), mod in models.items()}}
    sweep_banks = {"NMF": relu_bank} if nmf_rectified else {}
    report = report_from_models(models, bank, threshold, G, size, meta, sweep_banks)
    logger.info("report built in %.1fs", time.perf_counter() - t0)
    return report
