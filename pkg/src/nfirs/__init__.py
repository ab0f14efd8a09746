"""Near-field IRS channel estimation by tensor decomposition, with Cramer-Rao bounds."""

from .channel import BsIrsLink, PathParams, PathSet, rayleigh_distance, sample_paths
from .config import SPEED_OF_LIGHT, ScenarioConfig, load_config
from .crlb import CrlbReport, FimMatrix, assemble_fim, crlb_channel, crlb_parameters, crlb_report
from .estimator import Codebooks, EstimationResult, estimate
from .harness import SweepSpec, channel_nmse, nmse, run_sweep
from .measurement import (FactorMatrices, MeasurementTensor, TrainingOperators, add_noise,
                          ground_truth_factors, make_training_operators, synthesize_noiseless)

__version__ = "0.1.0"

__all__ = [
    "BsIrsLink", "Codebooks", "CrlbReport", "EstimationResult", "FactorMatrices", "FimMatrix",
    "MeasurementTensor", "PathParams", "PathSet", "SPEED_OF_LIGHT", "ScenarioConfig", "SweepSpec",
    "TrainingOperators", "add_noise", "assemble_fim", "channel_nmse", "crlb_channel",
    "crlb_parameters", "crlb_report", "estimate", "ground_truth_factors", "load_config",
    "make_training_operators", "nmse", "rayleigh_distance", "run_sweep", "sample_paths",
    "synthesize_noiseless",
]
