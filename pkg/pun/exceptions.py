"""pun Module Exceptions."""

from typing import Any, Optional

__author__ = "pun-mri Contributors"
__copyright__ = "Copyright 2026 pun-mri Contributors"
__license__ = "Apache License, Version 2.0"


class PunError(Exception):
    """Base class for every error raised by pun."""


class DimensionError(PunError, ValueError):
    """Array shapes do not agree."""


class ValidationError(PunError, ValueError):
    """A configuration value or argument is out of range."""


class ContainerError(PunError, ValueError):
    """A serialized tensor, sample or checkpoint is malformed."""


class NonFiniteError(PunError, ArithmeticError):
    """
    NaN or Inf met in an input or a loss.

    :param last_good: the most recent consistent state (e.g. a TrainReport
        holding the parameters after the last completed epoch), if any.
    """

    def __init__(self, message: str, last_good: Optional[Any] = None) -> None:
        super().__init__(message)
        self.last_good = last_good
