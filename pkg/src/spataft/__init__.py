"""Spatial accelerated failure-time modelling on grid-and-torus layouts.

Submodules: topology (grid coordinates and folded-torus relabeling), kernels
(powered-exponential correlation on both topologies), families (NOR/SEV noise
laws), priors (prior specifications and presets), model (AFT log posterior),
sampler (HMC), simulate (synthetic data and recovery), analyze (summaries,
Kaplan-Meier, log-rank, stepping-stone evidence), ingest (CSV IO), cli.
"""

from .families import Family
from .kernels import KernelParams, Topology, build_correlation_matrix
from .model import (
    ModelStructure,
    ParameterState,
    SurvivalDataset,
    fit_model,
    log_posterior,
)
from .priors import PriorSpec, load_preset
from .sampler import HMCConfig, PosteriorDraws, diagnostics, run_hmc
from .simulate import SimulationSettings, default_truth, generate_dataset
from .topology import GridSpec, LocationMap, build_location_map, folded_torus_order

__version__ = "0.1.0"

__all__ = [
    "Family",
    "GridSpec",
    "HMCConfig",
    "KernelParams",
    "LocationMap",
    "ModelStructure",
    "ParameterState",
    "PosteriorDraws",
    "PriorSpec",
    "SimulationSettings",
    "SurvivalDataset",
    "Topology",
    "__version__",
    "build_correlation_matrix",
    "build_location_map",
    "default_truth",
    "diagnostics",
    "fit_model",
    "folded_torus_order",
    "generate_dataset",
    "load_preset",
    "log_posterior",
    "run_hmc",
]
