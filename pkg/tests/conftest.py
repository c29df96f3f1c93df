import dataclasses

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from lanlab.model import gaussian_levy, make_builtin_model

settings.register_profile(
    "lanlab", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("lanlab")


@pytest.fixture
def ou_jumps():
    return make_builtin_model("ou", 1.0, gaussian_levy(1.0, 0.0, 1.0))


@pytest.fixture
def additive_jumps():
    return make_builtin_model("additive", 1.0, gaussian_levy(1.0, 0.0, 1.0))


@pytest.fixture
def additive_plain():
    return make_builtin_model("additive", 1.0)


def zero_noise(model):
    """Copy of a built-in model with sigma = 0 (the constructor rejects it)."""

    def diffusion(x):
        x = np.asarray(x, float)
        return np.zeros(x.shape + (1,))

    return dataclasses.replace(model, sigma=0.0, diffusion=diffusion, diffusion_bound=0.0)
