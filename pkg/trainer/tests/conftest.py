import json
import os
import subprocess
import sys

import pytest

CORPUS_CONFIG = {
    "domain": {"width_lr": 40, "height_lr": 20, "dx_lr": 1.0, "factor": 4},
    "solver": {"kappa": 0.15, "dt_lr": 0.25, "dt_hr": 0.03125},
    "wind": {"u0": 0.5, "n_terms": 3, "max_amp_ratio": 0.1, "period": 10.0},
    "snapshots": {"dt_snap": 2.5, "duration": 25.0, "n_phases": 4},
    "scene": {"n_sources": 5, "max_flux": 1.0, "radius": 1.0,
              "max_burst": 3, "max_gap": 6},
    "dataset": {"n_samples": 8, "drop_rates": [0.0, 0.2, 0.4, 0.6],
                "split_fractions": {"train": 0.5, "val": 0.0, "test": 0.5},
                "master_seed": 21, "obs_min_periods": 1.0, "obs_max_frac": 0.9,
                "norm_margin": 1.1, "n_calib_scenes": 4},
}


@pytest.fixture(scope="session")
def corpus_root(tmp_path_factory):
    """A small corpus generated through the simulation pipeline's CLI."""
    root = tmp_path_factory.mktemp("trainer_corpus")
    config_path = root / "config.json"
    config_path.write_text(json.dumps(CORPUS_CONFIG))
    subprocess.run(
        [sys.executable, "-m", "plumesr.cli", "dataset",
         "--config", str(config_path), "--root", str(root)],
        check=True, capture_output=True, text=True)
    return root
