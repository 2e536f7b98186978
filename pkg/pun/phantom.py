"""Synthetic complex phantoms, coil sensitivities and paired (x, y) datasets."""
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional, Tuple

import numpy as np
import torch
from attrs import asdict, define, field, frozen

from . import constants, util
from .exceptions import ValidationError
from .forward_model import (
    ComplexImage,
    ForwardOperator,
    KSpaceData,
    SamplingMask,
    SensitivityMaps,
    add_noise,
    generate_mask,
    normalize_kspace,
)

__author__ = "pun-mri Contributors"
__copyright__ = "Copyright 2026 pun-mri Contributors"
__license__ = "Apache License, Version 2.0"


log = util.getLogger(__name__)


@frozen
class PhantomFamily:
    """Ellipse and phase statistics of a phantom population."""

    name: str
    ellipse_count: Tuple[int, int]
    intensity: Tuple[float, float]
    semi_axis: Tuple[float, float]
    center_spread: float
    # highest spatial frequency (cycles per FOV) of the phase field
    phase_order: int
    phase_limit: float = constants.PHASE_LIMIT


FAMILIES: Dict[str, PhantomFamily] = {
    "base": PhantomFamily(
        name="base",
        ellipse_count=(5, 12),
        intensity=(0.2, 1.0),
        semi_axis=(0.08, 0.6),
        center_spread=0.5,
        phase_order=2,
    ),
    "shifted": PhantomFamily(
        name="shifted",
        ellipse_count=(12, 20),
        intensity=(0.05, 0.6),
        semi_axis=(0.03, 0.35),
        center_spread=0.65,
        phase_order=4,
    ),
}


def _family(name: str) -> PhantomFamily:
    try:
        return FAMILIES[name]
    except KeyError:
        raise ValidationError(
            "unknown phantom family {!r} (choose from {})".format(name, sorted(FAMILIES))
        ) from None


def _grid(size: int) -> Tuple[np.ndarray, np.ndarray]:
    axis = np.linspace(-1.0, 1.0, size)
    return np.meshgrid(axis, axis, indexing="xy")


def _phase_field(
    rng: np.random.Generator, xx: np.ndarray, yy: np.ndarray, family: PhantomFamily
) -> np.ndarray:
    field_ = np.zeros_like(xx)
    for kx in range(family.phase_order + 1):
        for ky in range(family.phase_order + 1):
            amplitude = rng.normal() / (1.0 + kx + ky)
            offset = rng.uniform(0.0, 2.0 * np.pi)
            field_ += amplitude * np.cos(np.pi * (kx * xx + ky * yy) / 2.0 + offset)
    peak = np.abs(field_).max()
    if peak == 0.0:
        return field_
    return field_ * (family.phase_limit * rng.uniform(0.5, 1.0) / peak)


def generate_phantom(size: int, seed: int, family: str = "base") -> ComplexImage:
    """
    Sum of seeded random ellipses times a smooth phase field.

    Magnitudes are clipped to [0, 1] and the phase stays within the family's
    limit (pi/4 by default).
    """
    if size < 8:
        raise ValidationError("phantom size must be >= 8 (actual={})".format(size))
    stats = _family(family)
    rng = np.random.default_rng(seed)
    xx, yy = _grid(size)
    magnitude = np.zeros((size, size))
    low, high = stats.ellipse_count
    for _ in range(int(rng.integers(low, high + 1))):
        cx, cy = rng.uniform(-stats.center_spread, stats.center_spread, size=2)
        a, b = rng.uniform(*stats.semi_axis, size=2)
        angle = rng.uniform(0.0, np.pi)
        intensity = rng.uniform(*stats.intensity)
        cos_a, sin_a = np.cos(angle), np.sin(angle)
        xr = cos_a * (xx - cx) + sin_a * (yy - cy)
        yr = -sin_a * (xx - cx) + cos_a * (yy - cy)
        magnitude[(xr / a) ** 2 + (yr / b) ** 2 <= 1.0] += intensity
    magnitude = np.clip(magnitude, 0.0, 1.0)
    phase = _phase_field(rng, xx, yy, stats)
    return torch.from_numpy(magnitude * np.exp(1j * phase))


def generate_maps(size: int, num_coils: int, seed: int) -> SensitivityMaps:
    """
    Smooth complex Gaussian coil profiles centered on a ring around the FOV,
    SOS-normalized per pixel.
    """
    if num_coils < 1:
        raise ValidationError("num_coils must be >= 1 (actual={})".format(num_coils))
    rng = np.random.default_rng(seed)
    xx, yy = _grid(size)
    raw = np.empty((num_coils, size, size), dtype=np.complex128)
    for coil in range(num_coils):
        angle = 2.0 * np.pi * coil / num_coils
        radius = rng.uniform(1.0, 1.4)
        width = rng.uniform(0.7, 1.1)
        cx, cy = radius * np.cos(angle), radius * np.sin(angle)
        bump = np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2.0 * width**2))
        phase = rng.uniform(0.0, 2.0 * np.pi) + rng.normal(scale=0.5) * (
            xx * np.cos(angle) + yy * np.sin(angle)
        )
        raw[coil] = bump * np.exp(1j * phase)
    return SensitivityMaps.normalized(raw)


@define(eq=False)
class SampleRecord:
    """One simulated acquisition."""

    ground_truth: ComplexImage
    kspace: KSpaceData
    maps: SensitivityMaps
    mask: SamplingMask
    scale: float
    seed: int

    @property
    def operator(self) -> ForwardOperator:
        return ForwardOperator(self.mask, self.maps)

    @property
    def target(self) -> ComplexImage:
        """Ground truth in the units of the normalized k-space."""
        return self.ground_truth / self.scale


@frozen
class DatasetConfig:
    """Everything needed to regenerate a dataset bit for bit."""

    num_samples: int = field(default=constants.SPLIT_SIZES["train"], validator=util.positive)
    image_size: int = field(default=constants.IMAGE_SIZE, validator=util.power_of_two)
    num_coils: int = field(default=constants.NUM_COILS, validator=util.positive)
    acceleration: float = field(
        default=constants.ACCELERATION, converter=float, validator=util.in_range(1.0)
    )
    acs_width: int = field(default=constants.ACS_WIDTH, validator=util.non_negative)
    noise_sigma: float = field(
        default=constants.NOISE_SIGMA, converter=float, validator=util.non_negative
    )
    base_seed: int = constants.BASE_SEED
    family: str = field(default="base", validator=util.one_of(*FAMILIES))

    def __attrs_post_init__(self) -> None:
        if self.image_size < 8:
            raise ValidationError("image_size must be >= 8 (actual={})".format(self.image_size))

    @classmethod
    def from_dict(cls, values: Dict) -> "DatasetConfig":
        return cls(**values)

    def to_dict(self) -> Dict:
        return asdict(self)


def split_config(split: str, base_seed: int = constants.BASE_SEED, **overrides) -> DatasetConfig:
    """Desk-scale config for the train / val / test split."""
    if split not in constants.SPLIT_SIZES:
        raise ValidationError("unknown split {!r}".format(split))
    values = {
        "num_samples": constants.SPLIT_SIZES[split],
        "base_seed": base_seed + constants.SPLIT_SEED_OFFSETS[split],
    }
    values.update(overrides)
    return DatasetConfig(**values)


def simulate_sample(
    ground_truth: ComplexImage,
    maps: SensitivityMaps,
    cfg: DatasetConfig,
    seed: int,
) -> SampleRecord:
    """mask -> forward -> noise -> normalize for a given image and coil set."""
    mask = generate_mask(
        cfg.image_size, cfg.acceleration, cfg.acs_width, util.derive_seed(seed, "mask")
    )
    op = ForwardOperator(mask, maps)
    kspace = add_noise(
        op.forward(ground_truth), cfg.noise_sigma, util.derive_seed(seed, "noise"), mask
    )
    kspace, scale = normalize_kspace(kspace)
    return SampleRecord(ground_truth, kspace, maps, mask, scale, seed)


def build_sample(cfg: DatasetConfig, index: int) -> SampleRecord:
    """Sample `index` of the dataset described by `cfg`."""
    seed = cfg.base_seed + index
    image = generate_phantom(cfg.image_size, util.derive_seed(seed, "phantom"), cfg.family)
    maps = generate_maps(cfg.image_size, cfg.num_coils, util.derive_seed(seed, "maps"))
    return simulate_sample(image, maps, cfg, seed)


def build_dataset(cfg: DatasetConfig, workers: Optional[int] = None) -> List[SampleRecord]:
    """
    Build every sample of `cfg`; sample i is seeded with base_seed + i.

    With `workers` > 1 samples are generated on a thread pool; the result is
    identical to the serial build.
    """
    indices = range(cfg.num_samples)
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(lambda i: build_sample(cfg, i), indices))
    else:
        records = [build_sample(cfg, i) for i in indices]
    log.debug(
        "built %d %s samples (accel=%s sigma=%s)",
        len(records),
        cfg.family,
        cfg.acceleration,
        cfg.noise_sigma,
    )
    return records
