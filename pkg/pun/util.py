"""pun Module Utility Functions Definitions."""
import hashlib
import logging
import math
from typing import Any, Callable, Iterable, Optional

import torch
from attrs import validators

from . import constants
from .exceptions import DimensionError, NonFiniteError, ValidationError

__author__ = "pun-mri Contributors"
__copyright__ = "Copyright 2026 pun-mri Contributors"
__license__ = "Apache License, Version 2.0"

Validator = Callable[[Any, Any, Any], None]


def getLogger(name):  # pylint: disable=invalid-name
    """
    Get a logger hooked up with the appropriate levels and outputs.
    """
    logger = logging.getLogger(name)

    if not logger.handlers:
        logger.setLevel(constants.LOG_LEVEL)
        console_handler = logging.StreamHandler()
        console_handler.setLevel(constants.LOG_LEVEL)
        console_handler.setFormatter(constants.LOG_FORMAT)
        logger.addHandler(console_handler)
    return logger


def set_log_level(level: int) -> None:
    """Apply `level` to every pun logger created so far."""
    for name, logger in logging.Logger.manager.loggerDict.items():
        if name.split(".")[0] == "pun" and isinstance(logger, logging.Logger):
            logger.setLevel(level)
            for handler in logger.handlers:
                handler.setLevel(level)


def round_half_up(value: float) -> int:
    """Round to the nearest integer, halves away from zero for positives."""
    return int(math.floor(value + 0.5))


def derive_seed(seed: int, *labels: Any) -> int:
    """
    Derive an independent 63-bit seed from `seed` and any number of labels.

    The derivation is a hash, so it does not depend on call order.
    """
    text = ":".join(str(part) for part in (seed,) + labels)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def torch_generator(seed: int) -> torch.Generator:
    """A CPU generator seeded with `seed`."""
    return torch.Generator().manual_seed(int(seed))


def configure_determinism(serial: bool) -> None:
    """Force bit-reproducible single-threaded torch kernels."""
    if serial:
        torch.use_deterministic_algorithms(True)
        torch.set_num_threads(1)


def check_finite(name: str, value: torch.Tensor) -> None:
    """Raise NonFiniteError when `value` holds NaN or Inf."""
    if not bool(torch.isfinite(value).all()):
        raise NonFiniteError("{} contains non-finite entries".format(name))


def check_shape(name: str, value: torch.Tensor, shape: Iterable[int]) -> None:
    """Raise DimensionError when `value` does not have exactly `shape`."""
    shape = tuple(shape)
    if tuple(value.shape) != shape:
        raise DimensionError(
            "{} must have shape {} (actual={})".format(name, shape, tuple(value.shape))
        )


def _raising_validation_error(check: Validator) -> Validator:
    """Wrap an attrs validator so that failures raise ValidationError."""

    def _validator(instance, attribute, value):
        try:
            check(instance, attribute, value)
        except ValueError as exc:
            raise ValidationError(str(exc)) from exc

    return _validator


positive = _raising_validation_error(validators.gt(0))
non_negative = _raising_validation_error(validators.ge(0))


def in_range(
    at_least: float,
    at_most: Optional[float] = None,
    open_low: bool = False,
    open_high: bool = False,
) -> Validator:
    """attrs validator factory for interval membership."""
    bounds = [validators.gt(at_least) if open_low else validators.ge(at_least)]
    if at_most is not None:
        bounds.append(validators.lt(at_most) if open_high else validators.le(at_most))
    return _raising_validation_error(validators.and_(*bounds))


def one_of(*choices: Any) -> Validator:
    """attrs validator factory: value is one of `choices`."""
    return _raising_validation_error(validators.in_(choices))


def power_of_two(instance, attribute, value):  # pylint: disable=unused-argument
    """attrs validator: value is a power of two."""
    if value < 1 or value & (value - 1):
        raise ValidationError(
            "{} must be a power of two (actual={})".format(attribute.name, value)
        )


def odd(instance, attribute, value):  # pylint: disable=unused-argument
    """attrs validator: value is odd."""
    if value % 2 != 1:
        raise ValidationError("{} must be odd (actual={})".format(attribute.name, value))
