"""
Small residual CNN denoiser over a flat parameter vector.

The parameters live in one float64 vector of length d; a layout records
which slice holds which convolution weight or bias. Every parameter can be
masked by an elementwise 0/1 (or relaxed) vector of length d.
"""
import math
from typing import Dict, List, Optional, Tuple, Union

import torch
import torch.nn.functional as F
from attrs import asdict, define, field, frozen

from . import constants, util
from .exceptions import DimensionError
from .forward_model import ComplexImage
from .masks import BinaryMask

__author__ = "pun-mri Contributors"
__copyright__ = "Copyright 2026 pun-mri Contributors"
__license__ = "Apache License, Version 2.0"


log = util.getLogger(__name__)


@frozen
class DenoiserArch:
    """Plain conv/ReLU stack with 2 input and 2 output channels."""

    num_layers: int = field(default=constants.NUM_LAYERS, validator=util.positive)
    hidden_channels: int = field(default=constants.HIDDEN_CHANNELS, validator=util.positive)
    kernel_size: int = field(default=constants.KERNEL_SIZE, validator=[util.positive, util.odd])
    residual: bool = True

    @classmethod
    def from_dict(cls, values: Dict) -> "DenoiserArch":
        return cls(**values)

    def to_dict(self) -> Dict:
        return asdict(self)

    def channels(self) -> List[Tuple[int, int]]:
        """(in, out) channel pairs per layer."""
        widths = (
            [constants.IMAGE_CHANNELS]
            + [self.hidden_channels] * (self.num_layers - 1)
            + [constants.IMAGE_CHANNELS]
        )
        return list(zip(widths[:-1], widths[1:]))


@frozen
class LayerSpec:
    """Where one weight or bias tensor sits inside the flat vector."""

    layer: int
    kind: str = field(validator=util.one_of("weight", "bias"))
    shape: Tuple[int, ...] = field(converter=tuple)
    offset: int

    @property
    def size(self) -> int:
        return math.prod(self.shape)


def build_layout(arch: DenoiserArch) -> Tuple[LayerSpec, ...]:
    layout = []
    offset = 0
    k = arch.kernel_size
    for index, (c_in, c_out) in enumerate(arch.channels()):
        for kind, shape in (("weight", (c_out, c_in, k, k)), ("bias", (c_out,))):
            spec = LayerSpec(index, kind, shape, offset)
            layout.append(spec)
            offset += spec.size
    return tuple(layout)


def _as_float(value) -> torch.Tensor:
    return torch.as_tensor(value).to(torch.float64)


def _layout_matches(instance, attribute, value):  # pylint: disable=unused-argument
    if value.ndim != 1:
        raise DimensionError("flat parameters must be one-dimensional")
    expected = sum(spec.size for spec in instance.layout)
    if value.shape[0] != expected:
        raise DimensionError(
            "flat has {} entries but layout describes {}".format(value.shape[0], expected)
        )
    util.check_finite(attribute.name, value)


@define(frozen=True, eq=False)
class DenoiserParams:
    """The flat parameter vector theta together with its layout."""

    layout: Tuple[LayerSpec, ...] = field(converter=tuple)
    flat: torch.Tensor = field(converter=_as_float, validator=_layout_matches)
    residual: bool = True

    @property
    def d(self) -> int:
        return int(self.flat.shape[0])

    def with_flat(self, flat: torch.Tensor) -> "DenoiserParams":
        return DenoiserParams(self.layout, flat, self.residual)

    def masked(self, mask: Optional["MaskLike"]) -> "DenoiserParams":
        """theta * m, the zeroed parameters."""
        if mask is None:
            return self
        return self.with_flat(self.flat * mask_values(mask, self.d))

    def layers(
        self, flat: Optional[torch.Tensor] = None
    ) -> List[Tuple[torch.Tensor, torch.Tensor]]:
        """(weight, bias) views per layer, taken from `flat` or self.flat."""
        flat = self.flat if flat is None else flat
        views: Dict[int, Dict[str, torch.Tensor]] = {}
        for spec in self.layout:
            chunk = flat[spec.offset : spec.offset + spec.size].view(spec.shape)
            views.setdefault(spec.layer, {})[spec.kind] = chunk
        return [(views[i]["weight"], views[i]["bias"]) for i in sorted(views)]


MaskLike = Union[torch.Tensor, BinaryMask]


def mask_values(mask: MaskLike, d: int) -> torch.Tensor:
    values = mask.to_tensor() if isinstance(mask, BinaryMask) else mask
    if values.ndim != 1 or values.shape[0] != d:
        raise DimensionError(
            "mask length {} does not match d={}".format(tuple(values.shape), d)
        )
    return values.to(torch.float64)


def init_params(arch: DenoiserArch, seed: int) -> DenoiserParams:
    """Kaiming (fan-in) Gaussian weights, zero biases."""
    generator = util.torch_generator(seed)
    layout = build_layout(arch)
    flat = torch.zeros(sum(spec.size for spec in layout), dtype=torch.float64)
    for spec in layout:
        if spec.kind != "weight":
            continue
        fan_in = spec.shape[1] * spec.shape[2] * spec.shape[3]
        values = torch.randn(spec.size, generator=generator, dtype=torch.float64)
        flat[spec.offset : spec.offset + spec.size] = values * math.sqrt(2.0 / fan_in)
    return DenoiserParams(layout, flat, arch.residual)


def forward(
    x: ComplexImage,
    params: DenoiserParams,
    mask: Optional[MaskLike] = None,
) -> ComplexImage:
    """
    D_theta(x): complex image -> (real, imag) channels -> conv/ReLU stack ->
    complex image, plus x when the architecture is residual. With `mask` the
    effective parameters are params.flat * mask.
    """
    flat = params.flat
    if mask is not None:
        flat = flat * mask_values(mask, params.d)
    hidden = torch.stack((x.real, x.imag)).unsqueeze(0)
    layers = params.layers(flat)
    for index, (weight, bias) in enumerate(layers):
        hidden = F.conv2d(hidden, weight, bias, padding=weight.shape[-1] // 2)
        if index < len(layers) - 1:
            hidden = F.relu(hidden)
    out = torch.complex(hidden[0, 0], hidden[0, 1])
    if params.residual:
        out = x + out
    return out


def backward(
    x: ComplexImage,
    params: DenoiserParams,
    mask: Optional[MaskLike],
    upstream_grad: ComplexImage,
) -> Tuple[ComplexImage, torch.Tensor]:
    """
    Reverse-mode gradients of `forward` for the cotangent `upstream_grad`.

    :return: (grad_x, grad_params); grad_params is zero wherever mask is zero.
    """
    if tuple(upstream_grad.shape) != tuple(x.shape):
        raise DimensionError(
            "upstream_grad shape {} does not match input {}".format(
                tuple(upstream_grad.shape), tuple(x.shape)
            )
        )
    with torch.enable_grad():
        x_leaf = x.detach().requires_grad_(True)
        flat_leaf = params.flat.detach().requires_grad_(True)
        out = forward(x_leaf, params.with_flat(flat_leaf), mask)
        grad_x, grad_flat = torch.autograd.grad(out, (x_leaf, flat_leaf), upstream_grad)
    return grad_x, grad_flat
