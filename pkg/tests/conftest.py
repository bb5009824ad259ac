import math

import pytest

from plumesr.core import Rng64
from plumesr.dataset import DatasetConfig, build_corpus_bank, generate_dataset
from plumesr.scene import Domain
from plumesr.wind import sample_wind


def tiny_dataset_config(**overrides):
    """Small-domain config shared by the fast tests: bank builds in seconds."""
    base = dict(
        domain=Domain(40, 20, 1.0, 4),
        kappa=0.15,
        period=10.0,
        dt_snap=2.5,
        duration=25.0,
        n_phases=4,
        n_samples=4,
        n_sources=5,
        split_fractions=(0.5, 0.25, 0.25),
        master_seed=11,
        n_calib_scenes=4,
    )
    base.update(overrides)
    return DatasetConfig(**base)


@pytest.fixture(scope="session")
def tiny_config():
    return tiny_dataset_config()


@pytest.fixture(scope="session")
def tiny_bank(tiny_config):
    return build_corpus_bank(tiny_config)


@pytest.fixture(scope="session")
def tiny_wind(tiny_config):
    return tiny_config.wind_model()


@pytest.fixture(scope="session")
def tiny_corpus(tiny_config, tiny_bank, tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    generate_dataset(tiny_config, root, bank=tiny_bank)
    return root


@pytest.fixture()
def rng():
    return Rng64(2024)


@pytest.fixture(scope="session")
def const_wind():
    """Pure-drift wind for analytic oracles."""
    return sample_wind(Rng64(0), u0=0.5, n_terms=0, max_amp_ratio=0.0, period=10.0)
