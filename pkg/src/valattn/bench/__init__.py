"""Operational surface: tensor files, synthetic instances, runs and the CLI."""
from .harness import RunConfig, run
from .synthetic import SyntheticSpec, generate_synthetic, load_instance, save_instance
from .tensorio import read_tensors, write_tensors

__all__ = [
    "RunConfig",
    "SyntheticSpec",
    "generate_synthetic",
    "load_instance",
    "read_tensors",
    "run",
    "save_instance",
    "write_tensors",
]
