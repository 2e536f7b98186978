import pytest
import torch

from pun.cg import (
    DcConfig,
    conjugate_gradient,
    data_consistency,
    dc_gradient,
    solve_dc,
    zdot,
)
from pun.exceptions import DimensionError
from pun.forward_model import ForwardOperator, SamplingMask, SensitivityMaps

from .conftest import random_complex, random_operator


__author__ = "pun-mri Contributors"
__copyright__ = "Copyright 2026 pun-mri Contributors"
__license__ = "Apache License, Version 2.0"


TIGHT = DcConfig(lam=1.0, tol=1e-13, max_iter=200)


def empty_operator(size=8, coils=2):
    maps = SensitivityMaps.normalized(random_complex((coils, size, size), 1))
    return ForwardOperator(SamplingMask.empty(size), maps)


def full_operator(size=8):
    return ForwardOperator(SamplingMask.full(size), SensitivityMaps.uniform(size, size))


def objective_gradient(op, x, y, z, lam):
    return 2.0 * op.adjoint(op.forward(x) - y) + 2.0 * lam * (x - z)


def test_zero_operator_returns_z():
    op = empty_operator()
    z = random_complex((8, 8), 2)
    result = solve_dc(op, torch.zeros(op.kspace_shape, dtype=torch.complex128), z, DcConfig())
    assert torch.equal(result.x, z)
    assert result.converged


def test_full_sampling_closed_form():
    op = full_operator()
    y = random_complex(op.kspace_shape, 3)
    z = random_complex((8, 8), 4)
    x = solve_dc(op, y, z, DcConfig()).x
    assert torch.allclose(x, (op.adjoint(y) + z) / 2.0, atol=1e-8)


@pytest.mark.parametrize("seed", range(20))
def test_solution_is_stationary(seed):
    op = random_operator(16, 2, seed=seed, acceleration=4.0, acs_width=4)
    y = op.forward(random_complex((16, 16), seed + 50))
    z = random_complex((16, 16), seed + 100)
    cfg = DcConfig(lam=1.0, tol=1e-6)
    result = solve_dc(op, y, z, cfg)
    assert result.converged
    gradient = objective_gradient(op, result.x, y, z, cfg.lam)
    bound = 1e-5 * (1.0 + float(torch.linalg.vector_norm(result.x)))
    assert float(torch.linalg.vector_norm(gradient)) <= bound


def test_solution_is_fixed_point(operator):
    y = random_complex(operator.kspace_shape, 1)
    z = random_complex((8, 8), 2)
    cfg = DcConfig()
    first = solve_dc(operator, y, z, cfg)
    again = solve_dc(operator, y, z, cfg, x0=first.x)
    assert again.iterations <= 1


def test_residuals_decrease(operator):
    y = random_complex(operator.kspace_shape, 5)
    z = random_complex((8, 8), 6)
    norms = solve_dc(operator, y, z, TIGHT).residual_norms
    assert norms[-1] < 1e-11 * norms[0]


@pytest.mark.parametrize("lam", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_residual_norms_never_increase(lam, seed):
    operator = random_operator(8, 3, seed, acceleration=3.0)
    y = random_complex(operator.kspace_shape, seed + 10)
    z = random_complex((8, 8), seed + 20)
    norms = solve_dc(operator, y, z, DcConfig(lam=lam, tol=1e-13, max_iter=200)).residual_norms
    assert len(norms) > 2
    for before, after in zip(norms, norms[1:]):
        assert after <= before * (1.0 + 1e-12)


def test_unconverged_returns_best_iterate(operator, caplog):
    y = random_complex(operator.kspace_shape, 5)
    z = random_complex((8, 8), 6)
    result = solve_dc(operator, y, z, DcConfig(tol=1e-15, max_iter=1))
    assert not result.converged
    assert result.iterations == 1
    assert min(result.residual_norms) < result.residual_norms[0]
    assert "CG stopped" in caplog.text


def test_conjugate_gradient_on_diagonal_system():
    diagonal = torch.linspace(1.0, 3.0, 10, dtype=torch.float64).to(torch.complex128)
    rhs = random_complex((10,), 0)
    result = conjugate_gradient(lambda v: diagonal * v, rhs, torch.zeros_like(rhs), 1e-12, 50)
    assert result.converged
    assert torch.allclose(result.x, rhs / diagonal, atol=1e-10)


def test_dc_gradient_zero_operator():
    g = random_complex((8, 8), 9)
    assert torch.allclose(dc_gradient(empty_operator(), g, DcConfig()), g, atol=1e-14)


def test_dc_gradient_full_sampling():
    g = random_complex((8, 8), 9)
    assert torch.allclose(dc_gradient(full_operator(), g, DcConfig()), g / 2.0, atol=1e-8)


def test_dc_gradient_matches_finite_differences(operator):
    y = random_complex(operator.kspace_shape, 1)
    z = random_complex((8, 8), 2)
    v = random_complex((8, 8), 3)
    step = 1e-6
    plus = solve_dc(operator, y, z + step * v, TIGHT).x
    minus = solve_dc(operator, y, z - step * v, TIGHT).x
    numeric = (plus - minus) / (2.0 * step)
    analytic = dc_gradient(operator, v, TIGHT)
    error = torch.linalg.vector_norm(numeric - analytic) / torch.linalg.vector_norm(analytic)
    assert float(error) <= 1e-6


def test_dc_gradient_is_self_adjoint(operator):
    a = random_complex((8, 8), 11)
    b = random_complex((8, 8), 12)
    lhs = zdot(a, dc_gradient(operator, b, TIGHT))
    rhs = zdot(dc_gradient(operator, a, TIGHT), b)
    assert abs(complex(lhs - rhs)) <= 1e-10 * abs(complex(lhs))


def test_data_consistency_gradcheck(operator):
    y = random_complex(operator.kspace_shape, 1)
    z = random_complex((8, 8), 2).requires_grad_(True)
    assert torch.autograd.gradcheck(
        lambda image: data_consistency(operator, y, image, TIGHT), (z,), eps=1e-6, atol=1e-5
    )


def test_shape_checked(operator):
    with pytest.raises(DimensionError):
        solve_dc(
            operator,
            torch.zeros(operator.kspace_shape, dtype=torch.complex128),
            torch.zeros((4, 4), dtype=torch.complex128),
            DcConfig(),
        )


def test_config_round_trip():
    cfg = DcConfig(lam=0.5, tol=1e-8, max_iter=12)
    assert DcConfig.from_dict(cfg.to_dict()) == cfg
