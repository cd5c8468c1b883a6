"""Tuning dimensions: find the stimulus attributes a layer's channels vary with.

Collect activation vectors, reduce them (PCA, ICA, NMF, LLE), sample points
along each component and render them by feature visualisation.  A Gabor
filter bank with known parameters provides ground truth.
"""

from .activations import ActivationMatrix, collect, load_activations, save_activations
from .config import ConfigError, PipelineConfig
from .decomposition import NMF, PCA, FastICA, LocallyLinearEmbedding, fit_reduction, make_reducer
from .featurevis import VisConfig, VisualizationResult, objective, render_grid, visualize
from .filterbank import FilterBank, GaborParams, build_gabor_bank, gabor_kernel
from .pipeline import run_pipeline
from .stimuli import grating, mixed_corpus, pink_noise
from .tuning import SampleSpec, TuningDimension, sample_all, sample_dimension
from .validate import build_report, sweep

__version__ = "0.1.0"

__all__ = [
    "ActivationMatrix", "ConfigError", "FastICA", "FilterBank", "GaborParams",
    "LocallyLinearEmbedding", "NMF", "PCA", "PipelineConfig", "SampleSpec",
    "TuningDimension", "VisConfig", "VisualizationResult", "build_gabor_bank",
    "build_report", "collect", "fit_reduction", "gabor_kernel", "grating",
    "load_activations", "make_reducer", "mixed_corpus", "objective", "pink_noise",
    "render_grid", "run_pipeline", "sample_all", "sample_dimension", "save_activations", "sweep",
    "visualize",
]
