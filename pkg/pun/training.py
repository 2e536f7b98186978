"""Supervised Adam training of dense, masked and pruned-while-training networks."""
import math
import time
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import torch
from attrs import asdict, define, evolve, field, frozen

from . import constants, util
from .denoiser import DenoiserParams
from .exceptions import NonFiniteError
from .masks import BinaryMask, PruneSchedule, magnitude_prune
from .metrics import psnr
from .phantom import SampleRecord
from .unrolled import UnrollConfig, batch_loss, loss_and_grad, reconstruct

__author__ = "pun-mri Contributors"
__copyright__ = "Copyright 2026 pun-mri Contributors"
__license__ = "Apache License, Version 2.0"


log = util.getLogger(__name__)


@frozen
class OptimizerConfig:
    """Adam hyper-parameters and the epoch loop."""

    learning_rate: float = field(
        default=constants.LEARNING_RATE, converter=float, validator=util.positive
    )
    beta1: float = field(
        default=constants.BETA1, converter=float, validator=util.in_range(0.0, 1.0, open_high=True)
    )
    beta2: float = field(
        default=constants.BETA2, converter=float, validator=util.in_range(0.0, 1.0, open_high=True)
    )
    epsilon: float = field(default=constants.EPSILON, converter=float, validator=util.positive)
    batch_size: int = field(default=constants.BATCH_SIZE, validator=util.positive)
    epochs: int = field(default=constants.EPOCHS, validator=util.non_negative)
    seed: int = constants.BASE_SEED

    @classmethod
    def from_dict(cls, values: Dict) -> "OptimizerConfig":
        return cls(**values)

    def to_dict(self) -> Dict:
        return asdict(self)


@define
class AdamState:
    """First and second moments plus the step counter."""

    moment1: torch.Tensor
    moment2: torch.Tensor
    step: int = 0

    @classmethod
    def zeros(cls, d: int) -> "AdamState":
        return cls(
            torch.zeros(d, dtype=torch.float64), torch.zeros(d, dtype=torch.float64), 0
        )


def adam_step(
    params: torch.Tensor,
    grad: torch.Tensor,
    moment1: torch.Tensor,
    moment2: torch.Tensor,
    t: int,
    cfg: OptimizerConfig,
    mask: Optional[torch.Tensor] = None,
) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """
    One bias-corrected Adam update at step `t` (1-based).

    Coordinates where `mask` is zero keep their value exactly.
    """
    moment1 = cfg.beta1 * moment1 + (1.0 - cfg.beta1) * grad
    moment2 = cfg.beta2 * moment2 + (1.0 - cfg.beta2) * grad * grad
    m_hat = moment1 / (1.0 - cfg.beta1**t)
    v_hat = moment2 / (1.0 - cfg.beta2**t)
    update = cfg.learning_rate * m_hat / (torch.sqrt(v_hat) + cfg.epsilon)
    if mask is not None:
        update = torch.where(mask != 0, update, torch.zeros_like(update))
    return params - update, moment1, moment2


@define
class EpochRecord:
    epoch: int
    train_loss: float
    val_psnr: float
    wall_time: float
    nonzero: int


@define
class TrainReport:
    """Per-epoch history plus the final weights and mask."""

    params: DenoiserParams
    mask: Optional[BinaryMask] = None
    epochs: List[EpochRecord] = field(factory=list)
    initial_loss: float = math.nan

    @property
    def final_loss(self) -> float:
        return self.epochs[-1].train_loss if self.epochs else self.initial_loss

    @property
    def wall_time(self) -> float:
        return sum(record.wall_time for record in self.epochs)


def batches(num_samples: int, batch_size: int, seed: int) -> List[List[int]]:
    """Seeded permutation of the sample indices cut into batches."""
    order = torch.randperm(num_samples, generator=util.torch_generator(seed)).tolist()
    return [order[i : i + batch_size] for i in range(0, num_samples, batch_size)]


def dataset_loss(
    dataset: Sequence[SampleRecord],
    params: DenoiserParams,
    mask: Optional[BinaryMask],
    cfg: UnrollConfig,
) -> float:
    """Mean per-sample loss over `dataset`, without gradients."""
    with torch.no_grad():
        return float(batch_loss(dataset, params, mask, cfg))


def mean_psnr(
    dataset: Sequence[SampleRecord],
    params: DenoiserParams,
    mask: Optional[BinaryMask],
    cfg: UnrollConfig,
) -> float:
    """Mean magnitude PSNR of the reconstructions of `dataset`."""
    if not dataset:
        return math.nan
    with torch.no_grad():
        values = [
            psnr(reconstruct(r.kspace, r.operator, params, mask, cfg), r.target)
            for r in dataset
        ]
    return float(sum(values) / len(values))


def train(  # pylint: disable=too-many-arguments,too-many-locals
    dataset: Sequence[SampleRecord],
    params: DenoiserParams,
    mask: Optional[BinaryMask] = None,
    unroll_cfg: UnrollConfig = UnrollConfig(),
    opt_cfg: OptimizerConfig = OptimizerConfig(),
    schedule: Optional[PruneSchedule] = None,
    val_dataset: Sequence[SampleRecord] = (),
    on_epoch_end: Optional[Callable[[TrainReport], None]] = None,
) -> TrainReport:
    """
    Epoch loop over seeded shuffled batches: loss_and_grad -> masked Adam.

    With a `schedule` the mask starts all-ones and magnitude pruning is
    applied at the start of every scheduled epoch; the final event prunes to
    exactly round(target_sparsity * d) weights. Masked-out coordinates never
    change. A non-finite loss raises NonFiniteError carrying the report of
    the last completed epoch.
    """
    if schedule is not None and mask is None:
        mask = BinaryMask.ones(params.d)
    report = TrainReport(params=params, mask=mask)
    if opt_cfg.epochs == 0:
        return report

    report.initial_loss = dataset_loss(dataset, params, mask, unroll_cfg)
    log.info("initial train loss %.6e (d=%d)", report.initial_loss, params.d)
    flat = params.flat.detach().clone()
    state = AdamState.zeros(params.d)
    for epoch in range(opt_cfg.epochs):
        started = time.perf_counter()
        if schedule is not None:
            mask = _apply_schedule(schedule, epoch, params.with_flat(flat), mask)
        mask_tensor = mask.to_tensor() if mask is not None else None
        losses = []
        for indices in batches(len(dataset), opt_cfg.batch_size, opt_cfg.seed + epoch):
            batch = [dataset[i] for i in indices]
            loss, grad = loss_and_grad(batch, params.with_flat(flat), mask, unroll_cfg)
            if not math.isfinite(loss):
                raise NonFiniteError(
                    "non-finite loss at epoch {} (batch {})".format(epoch, indices),
                    last_good=report,
                )
            state.step += 1
            flat, state.moment1, state.moment2 = adam_step(
                flat, grad, state.moment1, state.moment2, state.step, opt_cfg, mask_tensor
            )
            losses.append(loss)
            log.debug("epoch %d batch %s loss %.6e", epoch, indices, loss)

        current = params.with_flat(flat)
        record = EpochRecord(
            epoch=epoch,
            train_loss=sum(losses) / len(losses),
            val_psnr=mean_psnr(val_dataset, current, mask, unroll_cfg),
            wall_time=time.perf_counter() - started,
            nonzero=mask.count() if mask is not None else params.d,
        )
        report = evolve(report, params=current, mask=mask, epochs=report.epochs + [record])
        log.info(
            "epoch %d loss %.6e val PSNR %.2f dB (%d weights, %.1fs)",
            epoch,
            record.train_loss,
            record.val_psnr,
            record.nonzero,
            record.wall_time,
        )
        if on_epoch_end is not None:
            on_epoch_end(report)
    return report


def _apply_schedule(
    schedule: PruneSchedule,
    epoch: int,
    params: DenoiserParams,
    mask: BinaryMask,
) -> BinaryMask:
    for index, keep_fraction in schedule.at(epoch):
        keep_count = None
        if schedule.is_final(index):
            keep_count = util.round_half_up(schedule.target_sparsity * params.d)
        mask = magnitude_prune(params, mask, keep_fraction, keep_count)
        log.info("epoch %d: magnitude pruning kept %d weights", epoch, mask.count())
    return mask
