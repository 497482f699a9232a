import math

import numpy as np
import pytest

from gsid import (Box, DeadZone, ExpressionModel, PowerBasis, SineProduct, SystemSpec,
                  evaluate_gradient, evaluate_model)
from gsid.models import model_from_name


def _spec(model, lo, hi):
    return SystemSpec(model=model, theta_box=Box(np.atleast_1d(lo), np.atleast_1d(hi)))


SIN = _spec(SineProduct(), [0.0], [2 * math.pi])
POW = _spec(PowerBasis(1, 2), [-3.0, -3.0], [3.0, 3.0])
DEAD = _spec(DeadZone(width=1.0), [1.0], [2.0])


def test_evaluate_model_examples():
    assert evaluate_model(SIN, [0.0], [5.0]) == 0.0
    assert evaluate_model(POW, [1.0, 2.0], [3.0]) == pytest.approx(21.0, abs=0)
    # inside the blind band the output is zero for every parameter
    assert evaluate_model(DEAD, [1.5], [0.5, 123.0]) == 0.0
    assert evaluate_model(DEAD, [1.5], [-0.99, -7.0]) == 0.0
    # outside the band the two linear branches kick in
    assert evaluate_model(DEAD, [1.5], [2.0, 0.0]) == pytest.approx(1.5)
    assert evaluate_model(DEAD, [1.5], [-2.0, 0.0]) == pytest.approx(-1.5)


def test_evaluate_gradient_examples():
    assert evaluate_gradient(SIN, [0.0], [5.0]) == pytest.approx([5.0], abs=0)
    assert evaluate_gradient(POW, [1.0, 2.0], [3.0]) == pytest.approx([3.0, 9.0], abs=0)
    # constant-in-parameter regressor gives a zero gradient
    assert evaluate_gradient(SIN, [1.7], [0.0]) == pytest.approx([0.0], abs=0)
    assert evaluate_gradient(DEAD, [1.5], [0.3, 5.0]) == pytest.approx([0.0], abs=0)


@pytest.mark.parametrize("spec", [SIN, POW, DEAD])
def test_analytic_gradient_matches_central_differences(spec):
    rng = np.random.default_rng(7)
    fd_spec = SystemSpec(model=spec.model, theta_box=spec.theta_box,
                         gradient_mode="finite-difference")
    for _ in range(100):
        x = rng.uniform(spec.theta_box.lo, spec.theta_box.hi)
        z = rng.uniform(-5.0, 5.0, size=spec.m)
        if isinstance(spec.model, DeadZone) and abs(abs(z[0]) - spec.model.width) < 1e-3:
            continue  # gradient kink of the piecewise map
        ana = evaluate_gradient(spec, x, z)
        fd = evaluate_gradient(fd_spec, x, z)
        assert fd == pytest.approx(ana, rel=1e-5, abs=1e-7)


def test_batched_f_matches_scalar():
    rng = np.random.default_rng(11)
    for spec in (SIN, POW, DEAD):
        X = rng.uniform(spec.theta_box.lo, spec.theta_box.hi, size=(6, spec.n))
        Z = rng.uniform(-4, 4, size=(9, spec.m))
        F = spec.model.f_many(X, Z)
        for i in range(6):
            for j in range(9):
                assert F[i, j] == pytest.approx(spec.model.f(X[i], Z[j]), rel=1e-14, abs=1e-14)


def test_grad_sup_norm_closed_forms():
    assert SIN.model.grad_sup_norm(SIN.theta_box, 2.0) == pytest.approx(2.0, abs=0)
    assert POW.model.grad_sup_norm(POW.theta_box, 1.0) == pytest.approx(math.sqrt(2.0))
    assert DEAD.model.grad_sup_norm(DEAD.theta_box, 3.0) == pytest.approx(2.0)
    assert DEAD.model.grad_sup_norm(DEAD.theta_box, 0.5) == 0.0


def test_expression_model_matches_catalog():
    model = ExpressionModel("sin(x_1*y_1)", n=1, m=1)
    spec = _spec(model, [0.0], [2 * math.pi])
    rng = np.random.default_rng(13)
    for _ in range(25):
        x = rng.uniform(0, 2 * math.pi)
        z = rng.uniform(-3, 3)
        assert evaluate_model(spec, [x], [z]) == pytest.approx(math.sin(x * z), abs=0)
        assert evaluate_gradient(spec, [x], [z]) == pytest.approx([z * math.cos(x * z)],
                                                                  rel=1e-5, abs=1e-7)


def test_expression_model_rejects_out_of_range_variables():
    with pytest.raises(ValueError, match="x_2"):
        ExpressionModel("x_2 + y_1", n=1, m=1)
    with pytest.raises(ValueError, match="y_3"):
        ExpressionModel("x_1 * y_3", n=1, m=2)


def test_power_basis_validation():
    with pytest.raises(ValueError):
        PowerBasis(2, 2)
    with pytest.raises(ValueError):
        PowerBasis(-1, 2)


def test_system_spec_validation():
    with pytest.raises(ValueError, match="positive side"):
        _spec(SineProduct(), [1.0], [1.0])
    with pytest.raises(ValueError, match="dimension"):
        SystemSpec(model=PowerBasis(1, 2), theta_box=Box.interval(0, 1))
    with pytest.raises(ValueError, match="gradient_mode"):
        SystemSpec(model=SineProduct(), theta_box=Box.interval(0, 1), gradient_mode="magic")


def test_model_from_name():
    assert isinstance(model_from_name("sin_product"), SineProduct)
    assert model_from_name("power_basis", b1=0, b2=3).b2 == 3
    assert model_from_name("dead_zone", width=0.5).width == 0.5
    assert model_from_name("expression", source="x_1+y_1", n=1, m=1).n == 1
    with pytest.raises(ValueError, match="unknown model"):
        model_from_name("resnet")


def test_evaluate_model_reports_domain_error_bindings():
    from gsid.expressions import EvaluationDomainError

    spec = _spec(ExpressionModel("1/x_1", n=1, m=1), [0.0], [1.0])
    with pytest.raises(EvaluationDomainError, match="x_1=0.0"):
        evaluate_model(spec, [0.0], [0.5])


def test_gradient_stencil_error_names_coordinate():
    spec = _spec(ExpressionModel("exp(x_1*500)", n=1, m=1), [0.0], [2.0])
    with pytest.raises(ArithmeticError, match="x_1"):
        evaluate_gradient(spec, [2.0], [0.0])
