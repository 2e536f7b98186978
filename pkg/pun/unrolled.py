"""
MoDL unrolled reconstructor: N alternating denoise / data-consistency blocks
sharing one denoiser parameter vector.
"""
from typing import Dict, Optional, Sequence, Tuple

import torch
from attrs import field, frozen

from . import constants, util
from .cg import DcConfig, data_consistency
from .denoiser import DenoiserParams, MaskLike, mask_values
from .denoiser import forward as denoise
from .exceptions import ValidationError
from .forward_model import ComplexImage, ForwardOperator, KSpaceData
from .phantom import SampleRecord

__author__ = "pun-mri Contributors"
__copyright__ = "Copyright 2026 pun-mri Contributors"
__license__ = "Apache License, Version 2.0"


log = util.getLogger(__name__)


@frozen
class UnrollConfig:
    num_unrolls: int = field(default=constants.NUM_UNROLLS, validator=util.non_negative)
    dc: DcConfig = field(factory=DcConfig)

    @classmethod
    def from_dict(cls, values: Dict) -> "UnrollConfig":
        values = dict(values)
        dc = values.pop("dc", {})
        return cls(dc=DcConfig.from_dict(dc), **values)

    def to_dict(self) -> Dict:
        return {"num_unrolls": self.num_unrolls, "dc": self.dc.to_dict()}


def reconstruct(
    y: KSpaceData,
    op: ForwardOperator,
    params: DenoiserParams,
    mask: Optional[MaskLike] = None,
    cfg: UnrollConfig = UnrollConfig(),
) -> ComplexImage:
    """
    x0 = A^H y; x(n+1) = DC(D_theta(x(n))) for n < N; return x(N).

    Gradients flow to params.flat (and to a relaxed mask) when they require
    grad; the DC blocks backpropagate through the implicit CG gradient.
    """
    x = op.adjoint(y)
    for _ in range(cfg.num_unrolls):
        z = denoise(x, params, mask)
        x = data_consistency(op, y, z, cfg.dc)
    return x


def sample_loss(
    record: SampleRecord,
    params: DenoiserParams,
    mask: Optional[MaskLike],
    cfg: UnrollConfig,
) -> torch.Tensor:
    """Mean over pixels of |F_MoDL(y) - x|^2 for one sample."""
    output = reconstruct(record.kspace, record.operator, params, mask, cfg)
    return torch.mean((output - record.target).abs() ** 2)


def batch_loss(
    batch: Sequence[SampleRecord],
    params: DenoiserParams,
    mask: Optional[MaskLike],
    cfg: UnrollConfig,
) -> torch.Tensor:
    """Mean of `sample_loss` over the batch, reduced in batch order."""
    if not batch:
        raise ValidationError("batch must not be empty")
    total = sample_loss(batch[0], params, mask, cfg)
    for record in batch[1:]:
        total = total + sample_loss(record, params, mask, cfg)
    return total / len(batch)


def loss_and_grad(
    batch: Sequence[SampleRecord],
    params: DenoiserParams,
    mask: Optional[MaskLike],
    cfg: UnrollConfig,
) -> Tuple[float, torch.Tensor]:
    """
    Batch loss and its exact gradient with respect to params.flat through all
    N blocks. Entries of masked-out parameters are zero.
    """
    grad: Optional[torch.Tensor] = None
    with torch.enable_grad():
        flat = params.flat.detach().requires_grad_(True)
        loss = batch_loss(batch, params.with_flat(flat), mask, cfg)
        if loss.requires_grad:
            (grad,) = torch.autograd.grad(loss, flat, allow_unused=True)
    if grad is None:
        # N = 0: the output is A^H y and does not depend on the weights
        grad = torch.zeros_like(flat.detach())
    if mask is not None:
        keep = mask_values(mask, params.d) != 0
        grad = torch.where(keep, grad, torch.zeros_like(grad))
    value = float(loss.detach())
    util.check_finite("loss", loss.detach())
    return value, grad