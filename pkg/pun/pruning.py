"""
Pruning unrolled networks.

PUN-IT learns Bernoulli keep-probabilities p = sigmoid(logits) for every
denoiser parameter with the untrained weights frozen, using the Gumbel
relaxation of m ~ Ber(p) and a KL pull towards Ber(s/d), then keeps the s
most probable weights. PUN-AT is iterative magnitude pruning of a trained
network with retraining after every round.
"""
import math
import time
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import torch
from attrs import asdict, define, evolve, field, frozen

from . import constants, util
from .denoiser import DenoiserParams
from .exceptions import NonFiniteError, ValidationError
from .masks import BinaryMask, PruneSchedule, magnitude_prune, pun_wt_schedule
from .phantom import SampleRecord
from .training import (
    AdamState,
    OptimizerConfig,
    TrainReport,
    adam_step,
    batches,
    train,
)
from .unrolled import UnrollConfig, batch_loss

__author__ = "pun-mri Contributors"
__copyright__ = "Copyright 2026 pun-mri Contributors"
__license__ = "Apache License, Version 2.0"

__all__ = [
    "BinaryMask",
    "PruneConfig",
    "PruneSchedule",
    "PruneState",
    "binarize_top_s",
    "kl_bernoulli",
    "magnitude_prune",
    "optimize_probabilities",
    "pun_at",
    "pun_it",
    "pun_wt_schedule",
    "sample_relaxed_mask",
]

log = util.getLogger(__name__)

# relaxed masks are kept this far away from {0, 1}
RELAXED_EPS = 1e-12
_TINY = torch.finfo(torch.float64).tiny


@frozen
class PruneConfig:
    """Knobs of the prune-at-initialization workflow."""

    sparsity: float = field(
        default=constants.PUN_IT_SPARSITY,
        converter=float,
        validator=util.in_range(0.0, 1.0, open_low=True),
    )
    temperature: float = field(
        default=constants.TEMPERATURE, converter=float, validator=util.positive
    )
    # multiplies KL / d
    kl_weight: float = field(
        default=constants.KL_WEIGHT, converter=float, validator=util.non_negative
    )
    mask_epochs: int = field(default=constants.MASK_EPOCHS, validator=util.non_negative)
    mask_learning_rate: float = field(
        default=constants.MASK_LEARNING_RATE, converter=float, validator=util.positive
    )

    @classmethod
    def from_dict(cls, values: Dict) -> "PruneConfig":
        return cls(**values)

    def to_dict(self) -> Dict:
        return asdict(self)


@define
class MaskEpoch:
    epoch: int
    relaxed_loss: float
    kl: float


def _as_logits(value) -> torch.Tensor:
    return torch.as_tensor(value).to(torch.float64)


@define(frozen=True, eq=False)
class PruneState:
    """Bernoulli logits plus the sparsity budget and relaxation settings."""

    logits: torch.Tensor = field(converter=_as_logits)
    target_p0: float = field(
        converter=float, validator=util.in_range(0.0, 1.0, open_low=True, open_high=True)
    )
    budget: int = field(validator=util.positive)
    temperature: float = field(
        default=constants.TEMPERATURE, converter=float, validator=util.positive
    )
    kl_weight: float = field(
        default=constants.KL_WEIGHT, converter=float, validator=util.non_negative
    )
    history: Tuple[MaskEpoch, ...] = field(default=(), converter=tuple)

    def __attrs_post_init__(self) -> None:
        if self.budget > self.d:
            raise ValidationError("budget {} exceeds d={}".format(self.budget, self.d))

    @classmethod
    def initial(
        cls,
        d: int,
        sparsity: float = constants.PUN_IT_SPARSITY,
        temperature: float = constants.TEMPERATURE,
        kl_weight: float = constants.KL_WEIGHT,
    ) -> "PruneState":
        """p = 1/2 everywhere, s = round(sparsity * d), p0 = s / d."""
        budget = util.round_half_up(sparsity * d)
        if budget < 1 or budget > d:
            raise ValidationError("sparsity {} leaves {} of {} weights".format(sparsity, budget, d))
        return cls(
            torch.zeros(d, dtype=torch.float64), budget / d, budget, temperature, kl_weight
        )

    @property
    def d(self) -> int:
        return int(self.logits.shape[0])

    @property
    def probabilities(self) -> torch.Tensor:
        return torch.sigmoid(self.logits)


@define
class RelaxedMask:
    """A relaxed mask sample and the Gumbel draws that produced it."""

    values: torch.Tensor
    gumbel_keep: torch.Tensor
    gumbel_drop: torch.Tensor


def gumbel(shape, generator: torch.Generator) -> torch.Tensor:
    """Standard Gumbel draws -log(-log(U)), U ~ U(0, 1)."""
    uniform = torch.rand(shape, generator=generator, dtype=torch.float64).clamp(min=_TINY)
    return -torch.log(-torch.log(uniform))


def relaxed_bernoulli(
    logits: torch.Tensor,
    gumbel_keep: torch.Tensor,
    gumbel_drop: torch.Tensor,
    temperature: float,
) -> torch.Tensor:
    """sigmoid((logit(p) + G_l - G_k) / T), clamped into the open unit interval."""
    values = torch.sigmoid((logits + gumbel_keep - gumbel_drop) / temperature)
    return values.clamp(RELAXED_EPS, 1.0 - RELAXED_EPS)


def relaxed_bernoulli_ratio(
    p: torch.Tensor,
    gumbel_keep: torch.Tensor,
    gumbel_drop: torch.Tensor,
    temperature: float,
) -> torch.Tensor:
    """The same relaxation written as a two-way softmax over (keep, drop)."""
    keep = torch.exp((torch.log(p) + gumbel_keep) / temperature)
    drop = torch.exp((torch.log1p(-p) + gumbel_drop) / temperature)
    return keep / (keep + drop)


def sample_relaxed_mask(state: PruneState, seed: int) -> RelaxedMask:
    """
    One Gumbel-relaxed mask m_hat in (0, 1)^d. Differentiable with respect to
    state.logits when they require grad.
    """
    generator = util.torch_generator(seed)
    gumbel_keep = gumbel((state.d,), generator)
    gumbel_drop = gumbel((state.d,), generator)
    values = relaxed_bernoulli(state.logits, gumbel_keep, gumbel_drop, state.temperature)
    return RelaxedMask(values, gumbel_keep, gumbel_drop)


def kl_bernoulli(p: torch.Tensor, p0: float) -> torch.Tensor:
    """KL(Ber(p) || Ber(p0)) summed over the entries of p."""
    if not 0.0 < p0 < 1.0:
        raise ValidationError("p0 must lie in (0, 1) (actual={})".format(p0))
    p = p.clamp(RELAXED_EPS, 1.0 - RELAXED_EPS)
    keep = p * torch.log(p / p0)
    drop = (1.0 - p) * torch.log((1.0 - p) / (1.0 - p0))
    return torch.sum(keep + drop)


def relaxed_objective(
    batch: Sequence[SampleRecord],
    theta_init: DenoiserParams,
    state: PruneState,
    cfg: UnrollConfig,
    seed: int,
) -> torch.Tensor:
    """
    Single-sample estimate of E_m[loss(theta_init * m)] + kl_weight * KL / d.
    """
    relaxed = sample_relaxed_mask(state, seed)
    loss = batch_loss(batch, theta_init, relaxed.values, cfg)
    kl = kl_bernoulli(state.probabilities, state.target_p0)
    return loss + state.kl_weight * kl / state.d


def optimize_probabilities(  # pylint: disable=too-many-arguments,too-many-locals
    dataset: Sequence[SampleRecord],
    theta_init: DenoiserParams,
    state: PruneState,
    cfg: UnrollConfig,
    opt: OptimizerConfig,
    epochs: int,
    seed: int,
) -> PruneState:
    """
    Adam on the logits of `state` with theta_init frozen. Every batch draws a
    fresh relaxed mask. Returns the updated state; its history gains one
    MaskEpoch per epoch.
    """
    theta = theta_init.with_flat(theta_init.flat.detach())
    logits = state.logits.detach().clone()
    adam = AdamState.zeros(state.d)
    history = list(state.history)
    for epoch in range(epochs):
        losses = []
        for number, indices in enumerate(batches(len(dataset), opt.batch_size, seed + epoch)):
            batch = [dataset[i] for i in indices]
            with torch.enable_grad():
                leaf = logits.clone().requires_grad_(True)
                objective = relaxed_objective(
                    batch,
                    theta,
                    evolve(state, logits=leaf),
                    cfg,
                    util.derive_seed(seed, "gumbel", epoch, number),
                )
                (grad,) = torch.autograd.grad(objective, leaf)
            value = float(objective.detach())
            if not (math.isfinite(value) and bool(torch.isfinite(grad).all())):
                raise NonFiniteError(
                    "non-finite relaxed objective {} at epoch {} batch {}".format(
                        value, epoch, indices
                    ),
                    last_good=evolve(state, logits=logits, history=tuple(history)),
                )
            adam.step += 1
            logits, adam.moment1, adam.moment2 = adam_step(
                logits, grad, adam.moment1, adam.moment2, adam.step, opt
            )
            losses.append(value)
        with torch.no_grad():
            kl = float(kl_bernoulli(torch.sigmoid(logits), state.target_p0))
        history.append(MaskEpoch(epoch, sum(losses) / len(losses), kl))
        log.info(
            "mask epoch %d relaxed objective %.6e KL %.4e mean p %.4f",
            epoch,
            history[-1].relaxed_loss,
            kl,
            float(torch.sigmoid(logits).mean()),
        )
    return evolve(state, logits=logits, history=tuple(history))


def binarize_top_s(state: PruneState) -> BinaryMask:
    """Ones at the s most probable entries; ties go to the lowest index."""
    order = torch.sort(state.logits.detach(), descending=True, stable=True).indices
    return BinaryMask.from_indices(state.d, order[: state.budget].tolist())


@define
class PruneOutcome:
    """Result of a pruning workflow."""

    mask: BinaryMask
    params: DenoiserParams
    reports: List[TrainReport]
    timing: Dict[str, float]
    state: Optional[PruneState] = None

    def __iter__(self):
        return iter((self.mask, self.params))


def pun_it(  # pylint: disable=too-many-arguments
    dataset: Sequence[SampleRecord],
    theta_init: DenoiserParams,
    prune_cfg: PruneConfig = PruneConfig(),
    unroll_cfg: UnrollConfig = UnrollConfig(),
    opt_cfg: OptimizerConfig = OptimizerConfig(),
    val_dataset: Sequence[SampleRecord] = (),
    on_epoch_end: Optional[Callable[[TrainReport], None]] = None,
) -> PruneOutcome:
    """
    Prune at initialization: optimize p, keep the top s, then train the
    surviving weights of theta_init.
    """
    started = time.perf_counter()
    state = PruneState.initial(
        theta_init.d, prune_cfg.sparsity, prune_cfg.temperature, prune_cfg.kl_weight
    )
    state = optimize_probabilities(
        dataset,
        theta_init,
        state,
        unroll_cfg,
        evolve(opt_cfg, learning_rate=prune_cfg.mask_learning_rate),
        prune_cfg.mask_epochs,
        opt_cfg.seed,
    )
    mask = binarize_top_s(state)
    mask_time = time.perf_counter() - started
    log.info("PUN-IT kept %d of %d weights", mask.count(), theta_init.d)
    report = train(
        dataset, theta_init, mask, unroll_cfg, opt_cfg, None, val_dataset, on_epoch_end
    )
    timing = {"mask_optimization": mask_time, "training": report.wall_time}
    timing["total"] = time.perf_counter() - started
    return PruneOutcome(mask, report.params, [report], timing, state)


def at_milestones(target_sparsity: float, rounds: int) -> List[float]:
    """Geometric survivor fractions target^(k / rounds), k = 1..rounds."""
    if not 0 < target_sparsity <= 1:
        raise ValidationError(
            "target_sparsity must lie in (0, 1] (actual={})".format(target_sparsity)
        )
    if rounds < 1:
        raise ValidationError("rounds must be >= 1 (actual={})".format(rounds))
    return [target_sparsity ** (k / rounds) for k in range(1, rounds + 1)]


def pun_at(  # pylint: disable=too-many-arguments,too-many-locals
    dataset: Sequence[SampleRecord],
    trained_params: DenoiserParams,
    target_sparsity: float = constants.PUN_AT_SPARSITY,
    rounds: int = constants.PUN_AT_ROUNDS,
    retrain_epochs: int = constants.PUN_AT_RETRAIN_EPOCHS,
    unroll_cfg: UnrollConfig = UnrollConfig(),
    opt_cfg: OptimizerConfig = OptimizerConfig(),
    val_dataset: Sequence[SampleRecord] = (),
    on_epoch_end: Optional[Callable[[TrainReport], None]] = None,
) -> PruneOutcome:
    """
    Iterative magnitude pruning after training: every round prunes to the
    next geometric milestone and retrains the survivors.
    `on_epoch_end` sees every retraining epoch of every round.
    """
    started = time.perf_counter()
    d = trained_params.d
    mask = BinaryMask.ones(d)
    params = trained_params
    reports = []
    previous = 1.0
    for number, milestone in enumerate(at_milestones(target_sparsity, rounds), start=1):
        keep_count = util.round_half_up(milestone * d)
        mask = magnitude_prune(params, mask, milestone / previous, keep_count)
        previous = milestone
        log.info("PUN-AT round %d/%d kept %d weights", number, rounds, mask.count())
        round_cfg = evolve(
            opt_cfg, epochs=retrain_epochs, seed=util.derive_seed(opt_cfg.seed, "pun-at", number)
        )
        report = train(
            dataset, params, mask, unroll_cfg, round_cfg, None, val_dataset, on_epoch_end
        )
        params = report.params
        reports.append(report)
    timing = {"retraining": sum(report.wall_time for report in reports)}
    timing["total"] = time.perf_counter() - started
    return PruneOutcome(mask, params, reports, timing)
