"""Image-quality metrics and summary statistics for PSNR distributions."""
import math
from typing import Dict, Iterable, Optional, Tuple

import numpy as np
import torch
from attrs import asdict, field, frozen

from .exceptions import DimensionError, ValidationError

__author__ = "pun-mri Contributors"
__copyright__ = "Copyright 2026 pun-mri Contributors"
__license__ = "Apache License, Version 2.0"


def _magnitude(image) -> np.ndarray:
    if isinstance(image, torch.Tensor):
        image = image.detach().numpy()
    return np.abs(np.asarray(image))


def psnr(x, ref) -> float:
    """
    Magnitude PSNR in dB: 10 log10(max|ref|^2 / mean((|x| - |ref|)^2)).

    Returns +inf when the magnitudes agree exactly.
    """
    x_mag, ref_mag = _magnitude(x), _magnitude(ref)
    if x_mag.shape != ref_mag.shape:
        raise DimensionError(
            "image shapes differ: {} vs {}".format(x_mag.shape, ref_mag.shape)
        )
    peak = float(ref_mag.max())
    if peak == 0.0:
        raise ValidationError("reference image is all zero")
    mse = float(np.mean((x_mag - ref_mag) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak**2 / mse)


@frozen
class EvalSetting:
    """The test condition a PSNR distribution was measured under."""

    method: str = "dense"
    acceleration: float = 4.0
    sigma: float = 0.0
    family: str = "base"


@frozen
class EvalResult:
    """Box-plot statistics of per-sample PSNR values."""

    values: Tuple[float, ...] = field(converter=tuple)
    mean: float
    median: float
    q1: float
    q3: float
    minimum: float
    maximum: float
    setting: Optional[EvalSetting] = None

    def __attrs_post_init__(self) -> None:
        quartiles = (self.q1, self.median, self.q3)
        if any(math.isnan(q) for q in quartiles) or not self.q1 <= self.median <= self.q3:
            raise ValidationError("quartiles out of order: {} {} {}".format(*quartiles))

    def to_dict(self) -> Dict:
        result = asdict(self, filter=lambda a, _: a.name not in ("values", "setting"))
        result["n"] = len(self.values)
        return result


def _percentile(ordered: np.ndarray, q: float) -> float:
    """Linear interpolation between closest ranks that keeps +inf ranks intact."""
    position = (ordered.size - 1) * q / 100.0
    low, high = ordered[math.floor(position)], ordered[math.ceil(position)]
    fraction = position - math.floor(position)
    if low == high or fraction == 0.0:
        return float(low)
    return float(low + fraction * (high - low))


def quartiles(data: np.ndarray) -> Tuple[float, float, float]:
    """(q1, median, q3). Exact matches report +inf PSNR, so inf ranks are allowed."""
    if np.isfinite(data).all():
        q1, median, q3 = np.percentile(data, [25.0, 50.0, 75.0])
        return float(q1), float(median), float(q3)
    ordered = np.sort(data)
    return _percentile(ordered, 25.0), _percentile(ordered, 50.0), _percentile(ordered, 75.0)


def summarize(values: Iterable[float], setting: Optional[EvalSetting] = None) -> EvalResult:
    """Mean, median, linearly interpolated quartiles, min and max."""
    data = np.asarray(list(values), dtype=np.float64)
    if data.size == 0:
        raise ValidationError("cannot summarize an empty list")
    if np.isnan(data).any():
        raise ValidationError("PSNR values contain NaN")
    q1, median, q3 = quartiles(data)
    return EvalResult(
        values=tuple(float(v) for v in data),
        mean=float(np.mean(data)),
        median=median,
        q1=q1,
        q3=q3,
        minimum=float(data.min()),
        maximum=float(data.max()),
        setting=setting,
    )
