import numpy as np
import pytest

from src.losses import LossConfig
from src.model import ModelConfig
from src.synth import CohortConfig, generate_cohort


def small_cohort_config(**overrides) -> CohortConfig:
    values = dict(
        num_subjects=6,
        num_train=4,
        image_dims=(32, 32),
        ring_radius=8.0,
        ring_thickness=1.5,
        blob_radius=1.5,
        svf_bumps=3,
        svf_amplitude=1.5,
        svf_width=5.0,
        nuisance_amplitude=0.2,
        progression_mm=1.5,
        seed=0,
    )
    values.update(overrides)
    return CohortConfig(**values)


def small_model_config(**overrides) -> ModelConfig:
    values = dict(image_dims=(32, 32), grid_dims=(4, 4), channels=4, hidden_channels=4, head_hidden=8)
    values.update(overrides)
    return ModelConfig(**values)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def cohort_config():
    return small_cohort_config()


@pytest.fixture(scope="session")
def cohort(cohort_config):
    return generate_cohort(cohort_config)


@pytest.fixture
def model_config():
    return small_model_config()


@pytest.fixture
def loss_config():
    return LossConfig()
