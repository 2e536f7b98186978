"""Binary parameter masks, magnitude pruning and the prune-while-training schedule."""
import math
from typing import TYPE_CHECKING, Iterator, List, Optional, Sequence, Tuple

import numpy as np
import torch
from attrs import define, field, frozen
from bitarray import bitarray

from . import constants, util
from .exceptions import ValidationError

if TYPE_CHECKING:  # pragma: no cover
    from .denoiser import DenoiserParams

__author__ = "pun-mri Contributors"
__copyright__ = "Copyright 2026 pun-mri Contributors"
__license__ = "Apache License, Version 2.0"


log = util.getLogger(__name__)


def _as_bits(value) -> bitarray:
    if isinstance(value, bitarray):
        bits = bitarray(value, endian="little")
    else:
        bits = bitarray(endian="little")
        bits.pack(np.asarray(value, dtype=bool).astype(np.uint8).tobytes())
    return bits


@define
class BinaryMask:
    """A {0, 1} vector over the d denoiser parameters."""

    bits: bitarray = field(converter=_as_bits)

    @classmethod
    def ones(cls, d: int) -> "BinaryMask":
        bits = bitarray(d, endian="little")
        bits.setall(1)
        return cls(bits)

    @classmethod
    def from_indices(cls, d: int, indices: Sequence[int]) -> "BinaryMask":
        bits = bitarray(d, endian="little")
        bits.setall(0)
        for index in indices:
            bits[int(index)] = 1
        return cls(bits)

    @classmethod
    def from_tensor(cls, values: torch.Tensor) -> "BinaryMask":
        return cls((values != 0).numpy())

    @classmethod
    def from_packed(cls, data: bytes, d: int) -> "BinaryMask":
        bits = bitarray(endian="little")
        bits.frombytes(data)
        return cls(bits[:d])

    def __len__(self) -> int:
        return len(self.bits)

    def count(self) -> int:
        return self.bits.count(1)

    def packed(self) -> bytes:
        """Little bit-endian packing, zero padded to whole bytes."""
        return self.bits.tobytes()

    def indices(self) -> np.ndarray:
        return np.flatnonzero(np.frombuffer(self.bits.unpack(), dtype=np.uint8))

    def to_tensor(self) -> torch.Tensor:
        values = np.frombuffer(self.bits.unpack(), dtype=np.uint8).astype(np.float64)
        return torch.from_numpy(values)


def magnitude_prune(
    params: "DenoiserParams",
    current_mask: BinaryMask,
    keep_fraction: float,
    keep_count: Optional[int] = None,
) -> BinaryMask:
    """
    Keep the largest-|theta| fraction of the still unmasked weights.

    Ties go to the lowest index. Masked weights stay masked. `keep_count`
    overrides the rounded fraction when an exact survivor count is needed.
    """
    if not 0 < keep_fraction <= 1:
        raise ValidationError("keep_fraction must lie in (0, 1] (actual={})".format(keep_fraction))
    alive = current_mask.indices()
    if keep_count is None:
        keep_count = util.round_half_up(keep_fraction * alive.size)
    keep_count = min(keep_count, alive.size)
    magnitudes = params.flat.detach().abs().numpy()[alive]
    order = np.lexsort((alive, -magnitudes))
    return BinaryMask.from_indices(len(current_mask), alive[order[:keep_count]])


@frozen
class PruneSchedule:
    """Magnitude-pruning events (epoch, keep_fraction) in application order."""

    events: Tuple[Tuple[int, float], ...] = field(converter=tuple)
    target_sparsity: float

    def __iter__(self) -> Iterator[Tuple[int, float]]:
        return iter(self.events)

    def __len__(self) -> int:
        return len(self.events)

    def at(self, epoch: int) -> List[Tuple[int, float]]:
        """(event index, keep_fraction) pairs due at the start of `epoch`."""
        return [(i, keep) for i, (when, keep) in enumerate(self.events) if when == epoch]

    def is_final(self, index: int) -> bool:
        return index == len(self.events) - 1


def pun_wt_schedule(
    total_epochs: int,
    target_sparsity: float,
    window: float = constants.PUN_WT_WINDOW,
) -> PruneSchedule:
    """
    Halve the surviving weights at evenly spaced epochs inside the first
    `window` of training, then clamp once so exactly `target_sparsity`
    survives.
    """
    if not 0 < target_sparsity < 1:
        raise ValidationError(
            "target_sparsity must lie in (0, 1) (actual={})".format(target_sparsity)
        )
    if total_epochs < 1:
        raise ValidationError("total_epochs must be >= 1 (actual={})".format(total_epochs))
    halvings = int(math.floor(math.log(target_sparsity) / math.log(0.5) + 1e-9))
    last = min(util.round_half_up(window * total_epochs), total_epochs - 1)
    interval = max(1, util.round_half_up(window * total_epochs / (halvings + 1)))
    events = [(min(j * interval, last), constants.PRUNE_FRACTION) for j in range(1, halvings + 1)]
    remaining = target_sparsity / constants.PRUNE_FRACTION**halvings
    if not math.isclose(remaining, 1.0, rel_tol=0.0, abs_tol=1e-12):
        events.append((last, remaining))
    log.debug("PUN-WT schedule for %d epochs: %s", total_epochs, events)
    return PruneSchedule(events, target_sparsity)
