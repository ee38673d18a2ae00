"""Cardiac pulse removal from multichannel surface recordings with algebraic differentiators."""
from .errors import NumericalError, PipelineWarning, ValidationError
from .kernel import KernelSpec
from .fir import FirFilter, discretize
from .synth import MultichannelRecord, SynthScenario, default_scenario, generate
from .config import PipelineConfig, load_config
from .pipeline import run_pipeline

__all__ = ["NumericalError", "PipelineWarning", "ValidationError", "KernelSpec", "FirFilter",
           "discretize", "MultichannelRecord", "SynthScenario", "default_scenario", "generate",
           "PipelineConfig", "load_config", "run_pipeline"]
__version__ = "0.1.0"
