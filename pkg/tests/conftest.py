import numpy as np
import pytest
import torch

from pun.cg import DcConfig
from pun.denoiser import DenoiserArch, init_params
from pun.forward_model import ForwardOperator, SensitivityMaps, generate_mask
from pun.phantom import DatasetConfig, build_dataset
from pun.unrolled import UnrollConfig

from .constants import (
    TINY_ACCEL,
    TINY_ACS,
    TINY_CHANNELS,
    TINY_COILS,
    TINY_LAYERS,
    TINY_SAMPLES,
    TINY_SIZE,
)


__author__ = "pun-mri Contributors"
__copyright__ = "Copyright 2026 pun-mri Contributors"
__license__ = "Apache License, Version 2.0"


def random_complex(shape, seed):
    """Standard complex Gaussian tensor."""
    rng = np.random.default_rng(seed)
    values = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return torch.from_numpy(values)


def random_operator(size, coils, seed, acceleration=2.0, acs_width=2):
    """A random SOS-normalized coil set and a Poisson mask."""
    maps = SensitivityMaps.normalized(random_complex((coils, size, size), seed))
    mask = generate_mask(size, acceleration, acs_width, seed)
    return ForwardOperator(mask, maps)


@pytest.fixture
def operator():
    return random_operator(8, 2, seed=7)


@pytest.fixture
def tiny_cfg():
    return DatasetConfig(
        num_samples=TINY_SAMPLES,
        image_size=TINY_SIZE,
        num_coils=TINY_COILS,
        acceleration=TINY_ACCEL,
        acs_width=TINY_ACS,
        base_seed=11,
    )


@pytest.fixture
def tiny_dataset(tiny_cfg):
    return build_dataset(tiny_cfg)


@pytest.fixture
def tiny_arch():
    return DenoiserArch(num_layers=TINY_LAYERS, hidden_channels=TINY_CHANNELS)


@pytest.fixture
def tiny_params(tiny_arch):
    return init_params(tiny_arch, seed=5)


@pytest.fixture
def fast_unroll():
    return UnrollConfig(num_unrolls=2, dc=DcConfig(tol=1e-8, max_iter=100))


@pytest.fixture
def exact_unroll():
    """Tight CG so finite differences see the exact solve."""
    return UnrollConfig(num_unrolls=2, dc=DcConfig(tol=1e-13, max_iter=200))
