"""Geometry-aware domain adaptation with nuclear-norm coherence and
orthogonality losses, implemented on NumPy."""

from .data import DomainDataset, SyntheticConfig, generate_synthetic_shift, load_dataset_csv, save_dataset_csv
from .diagnostics import GeometryDiagnostics, geometry_diagnostics
from .losses import ClassPartition, LossWeights, geometry_aware, total_objective
from .model import Model, init_model, load_checkpoint, save_checkpoint
from .pipeline import TrainingConfig, TrainingHistory, evaluate, train
from .spectral import ContractError, NumericalError, nuclear_norm, principal_angles, svd
from .theory import run_theory_suite

__version__ = "0.1.0"

__all__ = [
    "ClassPartition", "ContractError", "DomainDataset", "GeometryDiagnostics", "LossWeights", "Model",
    "NumericalError", "SyntheticConfig", "TrainingConfig", "TrainingHistory", "evaluate",
    "generate_synthetic_shift", "geometry_aware", "geometry_diagnostics", "init_model", "load_checkpoint",
    "load_dataset_csv", "nuclear_norm", "principal_angles", "run_theory_suite", "save_checkpoint",
    "save_dataset_csv", "svd", "total_objective", "train",
]
