"""Plume-dispersion simulation, paired LR/HR SR dataset builder, and metrics."""

from .core import (Field, Mask, Rng64, SnapshotStack, derive_seed,
                   read_container, write_container)
from .dataset import (DatasetConfig, SamplePair, extract_patches,
                      generate_dataset, load_sample, make_dwn_hr_inputs)
from .metrics import (evaluate, psnr, psnr_delta_to_rms_ratio, residual_map,
                      ssim)
from .resample import (bicubic_baseline, bicubic_downsample, bicubic_upsample,
                       drop_pixels, fill_missing)
from .residual import (LossWeights, PhysicsMeta, physics_loss, pixel_loss,
                       residual_field, total_loss)
from .scene import (Domain, SceneSpec, SolutionBank, SourceSpec, build_bank,
                    compose, sample_scene)
from .solver import PdeTerms, SolverConfig, integrate, pde_terms, step_rk4
from .wind import WindModel, sample_wind, wind_at

__version__ = "0.1.0"

__all__ = [
    "Field", "Mask", "Rng64", "SnapshotStack", "derive_seed",
    "read_container", "write_container",
    "DatasetConfig", "SamplePair", "extract_patches", "generate_dataset",
    "load_sample", "make_dwn_hr_inputs",
    "evaluate", "psnr", "psnr_delta_to_rms_ratio", "residual_map", "ssim",
    "bicubic_baseline", "bicubic_downsample", "bicubic_upsample",
    "drop_pixels", "fill_missing",
    "LossWeights", "PhysicsMeta", "physics_loss", "pixel_loss",
    "residual_field", "total_loss",
    "Domain", "SceneSpec", "SolutionBank", "SourceSpec", "build_bank",
    "compose", "sample_scene",
    "PdeTerms", "SolverConfig", "integrate", "pde_terms", "step_rk4",
    "WindModel", "sample_wind", "wind_at",
    "__version__",
]
