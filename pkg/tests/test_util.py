import pytest
from attrs import field, frozen

from pun import util
from pun.exceptions import ValidationError


__author__ = "pun-mri Contributors"
__copyright__ = "Copyright 2026 pun-mri Contributors"
__license__ = "Apache License, Version 2.0"


@frozen
class Knobs:
    count: int = field(default=1, validator=util.positive)
    offset: int = field(default=0, validator=util.non_negative)
    fraction: float = field(default=0.5, validator=util.in_range(0.0, 1.0, open_low=True))
    floor: float = field(default=2.0, validator=util.in_range(1.0))
    kind: str = field(default="a", validator=util.one_of("a", "b"))


def test_defaults_are_valid():
    assert Knobs() == Knobs(1, 0, 0.5, 2.0, "a")


@pytest.mark.parametrize(
    "values",
    [
        {"count": 0},
        {"offset": -1},
        {"fraction": 0.0},
        {"fraction": 1.5},
        {"fraction": float("nan")},
        {"floor": 0.5},
        {"kind": "c"},
    ],
)
def test_violations_raise_validation_error(values):
    with pytest.raises(ValidationError) as info:
        Knobs(**values)
    assert isinstance(info.value, ValueError)
    assert list(values)[0] in str(info.value)


def test_closed_bounds_are_inclusive():
    assert Knobs(fraction=1.0, floor=1.0).fraction == 1.0


def test_power_of_two_and_odd():
    @frozen
    class Grid:
        size: int = field(validator=util.power_of_two)
        kernel: int = field(default=3, validator=[util.positive, util.odd])

    assert Grid(32).size == 32
    for bad in ({"size": 0}, {"size": 24}, {"size": 8, "kernel": 4}, {"size": 8, "kernel": -1}):
        with pytest.raises(ValidationError):
            Grid(**bad)
