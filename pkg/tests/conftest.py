import numpy as np
import pytest
import torch

from spmedit.networks import PyramidConfig, build_pyramid


@pytest.fixture(autouse=True)
def _fixed_torch_seed():
    torch.manual_seed(0)


@pytest.fixture
def rng():
    return np.random.default_rng(42)


def tiny_config(**overrides):
    """Smallest legal pyramid (base 64 is the minimum the halvings allow)."""
    kwargs = dict(base_resolution=(64, 64), base_channels=4, max_channels=8,
                  d_base_channels=4, d_max_channels=8, modulation_hidden=4)
    kwargs.update(overrides)
    return PyramidConfig(**kwargs)


@pytest.fixture
def tiny_state():
    return build_pyramid(tiny_config(), seed=0)
