"""One-bit rank-one matrix sensing for single-label multi-label learning."""

__version__ = "0.1.0"

from .sensing import (
    GroundTruthModel,
    MiniBatch,
    NoiseSpec,
    apply_adjoint,
    apply_sensing,
    make_ground_truth,
    sample_batch,
    sample_full_observation,
)
from .solver import LAMBDA, FactoredIterate, SolverConfig, naive_plug_in, run

__all__ = [
    "GroundTruthModel",
    "MiniBatch",
    "NoiseSpec",
    "apply_adjoint",
    "apply_sensing",
    "make_ground_truth",
    "sample_batch",
    "sample_full_observation",
    "LAMBDA",
    "FactoredIterate",
    "SolverConfig",
    "naive_plug_in",
    "run",
]
