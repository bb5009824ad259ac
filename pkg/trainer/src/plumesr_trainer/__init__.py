"""SR model trainer (Std-SR, PINNSR, Dwn-HR) for plumesr corpora."""

from .data import Corpus, Sample, load_sample
from .experiment import ExperimentRow, experiment_rows, run_experiment
from .infer import infer_corpus, super_resolve
from .network import Generator, NetworkConfig, build_network
from .residual import (interior_mask, physics_consistency, pixel_l1,
                       residual_stack, total_loss)
from .train import TrainConfig, cosine_restart_lr, load_checkpoint, train

__version__ = "0.1.0"

__all__ = [
    "Corpus", "Sample", "load_sample",
    "ExperimentRow", "experiment_rows", "run_experiment",
    "infer_corpus", "super_resolve",
    "Generator", "NetworkConfig", "build_network",
    "interior_mask", "physics_consistency", "pixel_l1", "residual_stack",
    "total_loss",
    "TrainConfig", "cosine_restart_lr", "load_checkpoint", "train",
    "__version__",
]
