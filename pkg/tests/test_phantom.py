import math

import pytest
import torch
from attrs import evolve

from pun import constants
from pun.exceptions import ValidationError
from pun.metrics import psnr
from pun.phantom import (
    FAMILIES,
    DatasetConfig,
    build_dataset,
    generate_maps,
    generate_phantom,
    simulate_sample,
    split_config,
)

from .constants import SOS_TOL


__author__ = "pun-mri Contributors"
__copyright__ = "Copyright 2026 pun-mri Contributors"
__license__ = "Apache License, Version 2.0"


def test_phantom_is_deterministic():
    assert torch.equal(generate_phantom(32, 5), generate_phantom(32, 5))


def test_phantoms_differ_across_seeds():
    assert float(torch.linalg.vector_norm(generate_phantom(32, 1) - generate_phantom(32, 2))) > 0


@pytest.mark.parametrize("family", sorted(FAMILIES))
def test_phantom_ranges(family):
    for seed in range(100):
        image = generate_phantom(16, seed, family)
        assert image.dtype == torch.complex128
        magnitude = image.abs()
        assert float(magnitude.min()) >= 0.0
        assert float(magnitude.max()) <= 1.0 + 1e-12
        phase = torch.angle(image[magnitude > 0])
        assert float(phase.abs().max()) <= constants.PHASE_LIMIT + 1e-12


def test_shifted_family_differs():
    assert not torch.equal(generate_phantom(32, 3, "base"), generate_phantom(32, 3, "shifted"))


def test_unknown_family_rejected():
    with pytest.raises(ValidationError):
        generate_phantom(32, 0, "knee")


def test_maps_are_sos_normalized():
    maps = generate_maps(16, 4, seed=2).maps
    assert float(((maps.abs() ** 2).sum(dim=0) - 1.0).abs().max()) <= SOS_TOL


def test_single_coil_map_has_unit_magnitude():
    maps = generate_maps(16, 1, seed=2).maps
    assert torch.allclose(maps.abs(), torch.ones_like(maps.abs()), atol=SOS_TOL)


def test_maps_are_deterministic():
    assert torch.equal(generate_maps(16, 3, 8).maps, generate_maps(16, 3, 8).maps)


def test_dataset_records(tiny_cfg, tiny_dataset):
    assert len(tiny_dataset) == tiny_cfg.num_samples
    assert len({record.seed for record in tiny_dataset}) == tiny_cfg.num_samples
    for record in tiny_dataset:
        assert record.kspace.shape == (tiny_cfg.num_coils, 8, 8)
        peak = max(float(record.kspace.real.abs().max()), float(record.kspace.imag.abs().max()))
        assert peak == 1.0


def test_noiseless_record_round_trip(tiny_dataset):
    for record in tiny_dataset:
        expected = record.operator.forward(record.ground_truth) / record.scale
        assert torch.allclose(record.kspace, expected, atol=1e-12)


def test_dataset_is_deterministic(tiny_cfg, tiny_dataset):
    again = build_dataset(tiny_cfg)
    for first, second in zip(tiny_dataset, again):
        assert torch.equal(first.ground_truth, second.ground_truth)
        assert torch.equal(first.kspace, second.kspace)
        assert first.mask.equals(second.mask)
        assert first.scale == second.scale


def test_threaded_build_matches_serial(tiny_cfg, tiny_dataset):
    threaded = build_dataset(tiny_cfg, workers=2)
    for first, second in zip(tiny_dataset, threaded):
        assert torch.equal(first.kspace, second.kspace)


def test_noise_changes_kspace(tiny_cfg, tiny_dataset):
    noisy = build_dataset(evolve(tiny_cfg, noise_sigma=0.05))
    assert torch.equal(noisy[0].ground_truth, tiny_dataset[0].ground_truth)
    assert not torch.equal(noisy[0].kspace, tiny_dataset[0].kspace)


def test_split_seeds_are_disjoint():
    train, val, test = (split_config(name, base_seed=3) for name in ("train", "val", "test"))
    assert (train.num_samples, val.num_samples, test.num_samples) == (64, 8, 16)
    assert val.base_seed - train.base_seed == 100_000
    assert test.base_seed - train.base_seed == 200_000


@pytest.mark.parametrize(
    "overrides",
    [
        {"image_size": 12},
        {"image_size": 4},
        {"acceleration": 0.5},
        {"noise_sigma": -0.1},
        {"family": "brain"},
        {"num_samples": 0},
    ],
)
def test_invalid_config_rejected(overrides):
    with pytest.raises(ValidationError):
        DatasetConfig(**overrides)


def test_config_dict_round_trip():
    cfg = DatasetConfig(num_samples=3, family="shifted", acceleration=8)
    assert DatasetConfig.from_dict(cfg.to_dict()) == cfg
    assert math.isclose(cfg.acceleration, 8.0)


def test_psnr_falls_as_noise_grows(tiny_dataset, tiny_cfg):
    # full sampling, so the adjoint is exact and noise is the only error
    sigmas = (0.0, 1e-3, 1e-2, 3e-2, 1e-1)
    curves = []
    for record in tiny_dataset:
        values = []
        for sigma in sigmas:
            cfg = evolve(tiny_cfg, acceleration=1.0, noise_sigma=sigma)
            noisy = simulate_sample(record.ground_truth, record.maps, cfg, record.seed)
            values.append(psnr(noisy.operator.adjoint(noisy.kspace), noisy.target))
        curves.append(values)
    mean = [sum(column) / len(column) for column in zip(*curves)]
    assert all(later < earlier for earlier, later in zip(mean, mean[1:]))
