"""
Multi-coil Cartesian MRI measurement operator A = MFS.

Images are (H, W) complex128 tensors, k-space is (C, H, W) complex128. The
Fourier transform is the orthonormal 2-D FFT with DC at the array center.
"""
from typing import Optional, Tuple

import numpy as np
import torch
from attrs import define, field

from . import constants, util
from .exceptions import DimensionError, ValidationError

__author__ = "pun-mri Contributors"
__copyright__ = "Copyright 2026 pun-mri Contributors"
__license__ = "Apache License, Version 2.0"


log = util.getLogger(__name__)

ComplexImage = torch.Tensor
KSpaceData = torch.Tensor

SOS_TOLERANCE = 1e-10
_SPATIAL = (-2, -1)


def fft2c(image: torch.Tensor) -> torch.Tensor:
    """Centered orthonormal 2-D FFT over the last two axes."""
    return torch.fft.fftshift(
        torch.fft.fft2(torch.fft.ifftshift(image, dim=_SPATIAL), norm="ortho"),
        dim=_SPATIAL,
    )


def ifft2c(kspace: torch.Tensor) -> torch.Tensor:
    """Centered orthonormal 2-D inverse FFT over the last two axes."""
    return torch.fft.fftshift(
        torch.fft.ifft2(torch.fft.ifftshift(kspace, dim=_SPATIAL), norm="ortho"),
        dim=_SPATIAL,
    )


def as_complex(value) -> torch.Tensor:
    """Convert arrays and tensors to complex128 tensors."""
    if isinstance(value, np.ndarray):
        value = torch.from_numpy(np.ascontiguousarray(value))
    return torch.as_tensor(value).to(torch.complex128)


def line_budget(width: int, acceleration: float) -> int:
    """Number of phase-encode lines kept at `acceleration`."""
    return util.round_half_up(width / acceleration)


def acs_indices(width: int, acs_width: int) -> np.ndarray:
    """Indices of the `acs_width` fully sampled center columns."""
    start = width // 2 - acs_width // 2
    return np.arange(start, start + acs_width)


def _sos_normalized(instance, attribute, value):  # pylint: disable=unused-argument
    if value.ndim != 3:
        raise DimensionError(
            "{} must be (coils, height, width) (actual={})".format(
                attribute.name, tuple(value.shape)
            )
        )
    util.check_finite(attribute.name, value)
    sos = (value.abs() ** 2).sum(dim=0)
    error = float((sos - 1.0).abs().max())
    if error > SOS_TOLERANCE:
        raise ValidationError(
            "{} must be SOS-normalized (max deviation={:.3e})".format(attribute.name, error)
        )


@define(frozen=True, eq=False)
class SensitivityMaps:
    """Complex coil sensitivities with per-pixel sum of |S_c|^2 equal to one."""

    maps: torch.Tensor = field(converter=as_complex, validator=_sos_normalized)

    @classmethod
    def normalized(cls, raw) -> "SensitivityMaps":
        """SOS-normalize arbitrary non-vanishing coil profiles."""
        raw = as_complex(raw)
        return cls(raw / torch.sqrt((raw.abs() ** 2).sum(dim=0, keepdim=True)))

    @classmethod
    def uniform(cls, height: int, width: int) -> "SensitivityMaps":
        """A single coil with S = 1 everywhere."""
        return cls(torch.ones((1, height, width), dtype=torch.complex128))

    @property
    def num_coils(self) -> int:
        return int(self.maps.shape[0])

    @property
    def shape(self) -> Tuple[int, int]:
        return int(self.maps.shape[1]), int(self.maps.shape[2])


def _as_lines(value) -> np.ndarray:
    lines = np.array(value, dtype=bool)
    lines.setflags(write=False)
    return lines


@define(frozen=True, eq=False)
class SamplingMask:
    """Phase-encode columns kept by a 1-D Cartesian undersampling pattern."""

    lines: np.ndarray = field(converter=_as_lines)
    acceleration: float = field(converter=float, validator=util.positive)
    acs_width: int = field(default=constants.ACS_WIDTH, validator=util.non_negative)

    def __attrs_post_init__(self) -> None:
        if self.lines.ndim != 1:
            raise DimensionError("lines must be one-dimensional")
        budget = line_budget(self.width, self.acceleration)
        if self.num_lines != budget:
            raise ValidationError(
                "mask keeps {} lines, expected round({}/{})={}".format(
                    self.num_lines, self.width, self.acceleration, budget
                )
            )
        if not self.lines[acs_indices(self.width, self.acs_width)].all():
            raise ValidationError("all {} ACS lines must be sampled".format(self.acs_width))

    @classmethod
    def full(cls, width: int, acs_width: int = constants.ACS_WIDTH) -> "SamplingMask":
        return cls(np.ones(width, dtype=bool), 1.0, min(acs_width, width))

    @classmethod
    def empty(cls, width: int) -> "SamplingMask":
        """No line sampled: the degenerate A = 0 operator."""
        return cls(np.zeros(width, dtype=bool), float("inf"), 0)

    @property
    def width(self) -> int:
        return int(self.lines.shape[0])

    @property
    def num_lines(self) -> int:
        return int(self.lines.sum())

    def as_tensor(self) -> torch.Tensor:
        """Column mask as a (W,) boolean tensor."""
        return torch.from_numpy(self.lines.copy())

    def equals(self, other: "SamplingMask") -> bool:
        return (
            np.array_equal(self.lines, other.lines)
            and self.acceleration == other.acceleration
            and self.acs_width == other.acs_width
        )


def _matching_width(instance, attribute, value):  # pylint: disable=unused-argument
    if value.shape[1] != instance.mask.width:
        raise DimensionError(
            "mask width {} does not match map width {}".format(
                instance.mask.width, value.shape[1]
            )
        )


@define(frozen=True, eq=False)
class ForwardOperator:
    """The multi-coil operator A = MFS and its adjoint."""

    mask: SamplingMask
    maps: SensitivityMaps = field(validator=_matching_width)
    _columns: torch.Tensor = field(init=False, repr=False)

    @_columns.default
    def _make_columns(self) -> torch.Tensor:
        return self.mask.as_tensor()

    @property
    def image_shape(self) -> Tuple[int, int]:
        return self.maps.shape

    @property
    def kspace_shape(self) -> Tuple[int, int, int]:
        return (self.maps.num_coils,) + self.maps.shape

    def _masked(self, kspace: torch.Tensor) -> torch.Tensor:
        return torch.where(self._columns, kspace, torch.zeros_like(kspace))

    def forward(self, image: ComplexImage) -> KSpaceData:
        util.check_shape("image", image, self.image_shape)
        return self._masked(fft2c(self.maps.maps * image))

    def adjoint(self, kspace: KSpaceData) -> ComplexImage:
        util.check_shape("k-space", kspace, self.kspace_shape)
        return (torch.conj(self.maps.maps) * ifft2c(self._masked(kspace))).sum(dim=0)

    def normal(self, image: ComplexImage) -> ComplexImage:
        """A^H A applied to `image`."""
        return self.adjoint(self.forward(image))

    def with_mask(self, mask: SamplingMask) -> "ForwardOperator":
        return ForwardOperator(mask, self.maps)


def apply_forward(op: ForwardOperator, x: ComplexImage) -> KSpaceData:
    """Per coil c: mask * FFT(S_c * x)."""
    return op.forward(x)


def apply_adjoint(op: ForwardOperator, y: KSpaceData) -> ComplexImage:
    """Sum over coils of conj(S_c) * IFFT(mask * y_c)."""
    return op.adjoint(y)


def _gap(column: int, center: int, gamma: float) -> int:
    return max(1, util.round_half_up(gamma * (1.0 + abs(column - center) / center)))


def _throw_darts(
    width: int, budget: int, acs: np.ndarray, gamma: float, seed: int
) -> Tuple[np.ndarray, bool]:
    """
    Variable-density dart throwing over phase-encode columns.

    :return: (lines, stalled) where stalled means the rejection limit was hit
             before the budget was met.
    """
    rng = np.random.default_rng(seed)
    lines = np.zeros(width, dtype=bool)
    lines[acs] = True
    center = max(width // 2, 1)
    count = int(lines.sum())
    rejections = 0
    limit = constants.MASK_STALL_FACTOR * width
    while count < budget:
        column = int(rng.choice(np.flatnonzero(~lines)))
        taken = np.flatnonzero(lines)
        if taken.size == 0 or np.abs(taken - column).min() >= _gap(column, center, gamma):
            lines[column] = True
            count += 1
            continue
        rejections += 1
        if rejections > limit:
            return lines, True
    return lines, False


def generate_mask(
    width: int,
    acceleration: float,
    acs_width: int = constants.ACS_WIDTH,
    seed: int = 0,
) -> SamplingMask:
    """
    Seeded 1-D Poisson-style Cartesian mask.

    Exactly round(width / acceleration) columns are kept, including the
    `acs_width` center columns. The remaining columns come from dart throwing
    with a minimum gap that widens away from the center; the gap scale is the
    largest one (found by bisection) for which the budget is still met.
    """
    if acceleration < 1:
        raise ValidationError("acceleration must be >= 1 (actual={})".format(acceleration))
    budget = line_budget(width, acceleration)
    if acs_width < 0 or budget < acs_width:
        raise ValidationError(
            "line budget {} cannot hold {} ACS lines".format(budget, acs_width)
        )
    acs = acs_indices(width, acs_width)
    if budget == width:
        return SamplingMask(np.ones(width, dtype=bool), acceleration, acs_width)

    # gap 1 accepts every free column, so the gamma = 0 throw is a plain random
    # fill without replacement and never stalls; it backs every stalled gamma
    best, _ = _throw_darts(width, budget, acs, 0.0, seed)
    low, high = 0.0, float(width)
    for _ in range(constants.MASK_BISECTION_STEPS):
        gamma = 0.5 * (low + high)
        lines, gamma_stalled = _throw_darts(width, budget, acs, gamma, seed)
        if gamma_stalled:
            high = gamma
        else:
            low, best = gamma, lines
    log.debug("mask width=%d accel=%s gap scale=%.4f", width, acceleration, low)
    return SamplingMask(best, acceleration, acs_width)


def normalize_kspace(y: KSpaceData) -> Tuple[KSpaceData, float]:
    """Scale `y` so that max(|Re|, |Im|) over all entries is exactly one."""
    scale = float(torch.maximum(y.real.abs().max(), y.imag.abs().max()))
    if scale == 0.0:
        raise ValidationError("cannot normalize all-zero k-space")
    # componentwise so the largest component lands on exactly 1
    return torch.complex(y.real / scale, y.imag / scale), scale


def add_noise(
    y: KSpaceData,
    sigma: float,
    seed: int,
    mask: Optional[SamplingMask] = None,
) -> KSpaceData:
    """
    Add i.i.d. complex Gaussian noise (real and imaginary std `sigma`) to the
    sampled columns of `y`. Without `mask`, sampled columns are those holding
    any non-zero entry.
    """
    if sigma < 0:
        raise ValidationError("sigma must be non-negative (actual={})".format(sigma))
    if sigma == 0:
        return y.clone()
    if mask is not None:
        columns = mask.as_tensor()
    else:
        columns = (y != 0).flatten(0, -2).any(dim=0)
    generator = util.torch_generator(seed)
    real = torch.randn(y.shape, generator=generator, dtype=torch.float64)
    imag = torch.randn(y.shape, generator=generator, dtype=torch.float64)
    noisy = y + sigma * torch.complex(real, imag)
    return torch.where(columns, noisy, torch.zeros_like(y))
