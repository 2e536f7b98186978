"""
Conjugate-gradient data consistency.

Solves (A^H A + lam I) x = A^H y + lam z in the complex image domain and
provides the matching implicit gradient lam (A^H A + lam I)^-1 g.
"""
from typing import Callable, Dict, List, Optional

import torch
from attrs import asdict, define, field, frozen

from . import constants, util
from .forward_model import ComplexImage, ForwardOperator, KSpaceData

__author__ = "pun-mri Contributors"
__copyright__ = "Copyright 2026 pun-mri Contributors"
__license__ = "Apache License, Version 2.0"


log = util.getLogger(__name__)

LinearMap = Callable[[torch.Tensor], torch.Tensor]


@frozen
class DcConfig:
    """Data-consistency weight and CG stopping rule."""

    lam: float = field(default=constants.DC_LAMBDA, converter=float, validator=util.positive)
    tol: float = field(default=constants.CG_TOL, converter=float, validator=util.positive)
    max_iter: int = field(default=constants.CG_MAX_ITER, validator=util.positive)

    @classmethod
    def from_dict(cls, values: Dict) -> "DcConfig":
        return cls(**values)

    def to_dict(self) -> Dict:
        return asdict(self)


@define
class CgResult:
    """Outcome of one CG solve."""

    x: ComplexImage
    iterations: int
    residual_norms: List[float]
    converged: bool


def zdot(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Complex inner product <a, b> = sum(conj(a) * b)."""
    return torch.sum(torch.conj(a) * b)


def conjugate_gradient(
    operator: LinearMap,
    rhs: torch.Tensor,
    x0: torch.Tensor,
    tol: float,
    max_iter: int,
) -> CgResult:
    """
    CG for a Hermitian positive-definite `operator`.

    Stops when ||r|| <= tol * ||rhs||. If `max_iter` is reached first the
    iterate with the smallest residual is returned and `converged` is False.
    """
    x = x0.clone()
    r = rhs - operator(x)
    rs_old = zdot(r, r).real
    norms = [float(torch.sqrt(rs_old))]
    threshold = tol * float(torch.linalg.vector_norm(rhs))
    if norms[0] <= threshold:
        return CgResult(x, 0, norms, True)

    best_x, best_norm = x, norms[0]
    p = r
    for iteration in range(1, max_iter + 1):
        ap = operator(p)
        alpha = rs_old / zdot(p, ap).real
        x = x + alpha * p
        r = r - alpha * ap
        rs_new = zdot(r, r).real
        norms.append(float(torch.sqrt(rs_new)))
        if norms[-1] < best_norm:
            best_x, best_norm = x, norms[-1]
        if norms[-1] <= threshold:
            return CgResult(x, iteration, norms, True)
        p = r + (rs_new / rs_old) * p
        rs_old = rs_new
    return CgResult(best_x, max_iter, norms, False)


def _dc_operator(op: ForwardOperator, lam: float) -> LinearMap:
    def _apply(image: torch.Tensor) -> torch.Tensor:
        return op.normal(image) + lam * image

    return _apply


def _warn_unconverged(what: str, result: CgResult, cfg: DcConfig) -> None:
    if not result.converged:
        log.warning(
            "%s: CG stopped at max_iter=%d with relative residual %.3e > tol=%.1e",
            what,
            cfg.max_iter,
            result.residual_norms[-1] / max(result.residual_norms[0], 1e-300),
            cfg.tol,
        )


def solve_dc(
    op: ForwardOperator,
    y: KSpaceData,
    z: ComplexImage,
    cfg: DcConfig,
    x0: Optional[ComplexImage] = None,
) -> CgResult:
    """
    argmin_x ||Ax - y||^2 + lam ||x - z||^2, by CG started at `x0` (default z).
    """
    util.check_shape("z", z, op.image_shape)
    util.check_finite("y", y)
    util.check_finite("z", z)
    rhs = op.adjoint(y) + cfg.lam * z
    start = z if x0 is None else x0
    result = conjugate_gradient(_dc_operator(op, cfg.lam), rhs, start, cfg.tol, cfg.max_iter)
    log.debug("solve_dc: %d CG iterations", result.iterations)
    _warn_unconverged("solve_dc", result, cfg)
    return result


def dc_gradient(op: ForwardOperator, g: ComplexImage, cfg: DcConfig) -> ComplexImage:
    """lam (A^H A + lam I)^-1 g, the adjoint of the solve with respect to z."""
    util.check_shape("g", g, op.image_shape)
    util.check_finite("g", g)
    result = conjugate_gradient(
        _dc_operator(op, cfg.lam), cfg.lam * g, g, cfg.tol, cfg.max_iter
    )
    _warn_unconverged("dc_gradient", result, cfg)
    return result.x


class _DataConsistency(torch.autograd.Function):
    """Autograd node whose backward pass is the implicit CG gradient."""

    @staticmethod
    def forward(ctx, z, op, y, cfg):  # pylint: disable=arguments-differ
        ctx.op, ctx.cfg = op, cfg
        return solve_dc(op, y, z.detach(), cfg).x

    @staticmethod
    def backward(ctx, grad_output):  # pylint: disable=arguments-differ
        return dc_gradient(ctx.op, grad_output, ctx.cfg), None, None, None


def data_consistency(
    op: ForwardOperator, y: KSpaceData, z: ComplexImage, cfg: DcConfig
) -> ComplexImage:
    """Differentiable data-consistency block x = DC(z)."""
    return _DataConsistency.apply(z, op, y, cfg)
