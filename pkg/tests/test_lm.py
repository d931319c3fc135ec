import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lidarcam_calib.errors import JacobianMismatch, NumericalFailure
from lidarcam_calib.lm import LMConfig, compare_jacobians, levenberg_marquardt, numerical_jacobian


def rosenbrock(x):
    return np.array([10.0 * (x[1] - x[0] ** 2), 1.0 - x[0]])


def rosenbrock_jac(x):
    return np.array([[-20.0 * x[0], 10.0], [-1.0, 0.0]])


@settings(max_examples=30)
@given(st.lists(st.floats(-5, 5), min_size=1, max_size=6))
def test_quadratic_bowl_in_two_iterations(a):
    a = np.array(a)
    # with the default damping two accepted steps shrink the residual by ~1e-7
    x, rep = levenberg_marquardt(lambda x: x - a, np.zeros_like(a), lambda x: np.eye(a.size),
                                 LMConfig(max_iterations=2))
    assert np.allclose(x, a, atol=1e-6)
    assert rep.iterations <= 2


def test_quadratic_bowl_converges():
    a = np.array([1.0, -2.0, 3.0])
    x, rep = levenberg_marquardt(lambda x: x - a, np.zeros(3))
    assert np.allclose(x, a, atol=1e-12)
    assert rep.converged


def test_rosenbrock():
    x, rep = levenberg_marquardt(rosenbrock, np.array([-1.2, 1.0]), rosenbrock_jac)
    assert np.allclose(x, [1.0, 1.0], atol=1e-8)
    assert rep.converged


def test_rosenbrock_finite_difference_jacobian():
    x, _ = levenberg_marquardt(rosenbrock, np.array([-1.2, 1.0]))
    assert np.allclose(x, [1.0, 1.0], atol=1e-8)


def test_cost_history_never_increases():
    _, rep = levenberg_marquardt(rosenbrock, np.array([-1.2, 1.0]), rosenbrock_jac)
    h = np.array(rep.cost_history)
    assert np.all(np.diff(h) <= 0)
    assert rep.initial_cost == pytest.approx(24.2)


def test_non_finite_start():
    with pytest.raises(NumericalFailure):
        levenberg_marquardt(lambda x: np.array([np.nan]), np.zeros(1))


def test_non_finite_jacobian():
    with pytest.raises(NumericalFailure):
        levenberg_marquardt(lambda x: x - 1.0, np.zeros(1), lambda x: np.array([[np.inf]]))


def test_jacobian_check_mode():
    wrong = lambda x: 2 * rosenbrock_jac(x)  # noqa: E731
    with pytest.raises(JacobianMismatch):
        levenberg_marquardt(rosenbrock, np.array([-1.2, 1.0]), wrong, LMConfig(check_jacobian=True))
    levenberg_marquardt(rosenbrock, np.array([-1.2, 1.0]), rosenbrock_jac, LMConfig(check_jacobian=True))


def test_iteration_cap_is_a_status():
    x, rep = levenberg_marquardt(rosenbrock, np.array([-1.2, 1.0]), rosenbrock_jac, LMConfig(max_iterations=3))
    assert rep.status == "max_iterations" and rep.iterations == 3
    assert not rep.converged


def test_numerical_jacobian_matches_analytic(rng):
    for _ in range(20):
        x = rng.uniform(-2, 2, 2)
        assert compare_jacobians(rosenbrock_jac(x), numerical_jacobian(rosenbrock, x))


def test_config_must_be_positive():
    with pytest.raises(ValueError):
        LMConfig(gradient_tol=0)
    with pytest.raises(ValueError):
        LMConfig(damping_up=1.0)
