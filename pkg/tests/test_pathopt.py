import numpy as np
import pytest

from mmflow.couplings import AffineMap, Checkerboard, Gaussian, IndependentCoupling
from mmflow.fields import FieldModel
from mmflow.oracle import GaussianProblem, MongeProblem
from mmflow.pathopt import (
    PathOptConfig,
    alpha_table,
    cost_gradient,
    cost_trace_to_csv,
    optimize_path,
    transport_cost,
)
from mmflow.simplex import SimplexPath

STD = GaussianProblem(([0.0], [0.0]), ([[1.0]], [[1.0]]))
M = np.array([2.0, 1.0])
SHIFT = MongeProblem((AffineMap.shift(M),))


def test_standard_normal_linear_cost():
    # int_0^1 E|b|^2 dt = int_{-1}^{1} u^2 / (1 + u^2) du = 2 - pi/2
    est = transport_cost(STD, SimplexPath.linear_edge(0, 1, 1), STD.coupling(), PathOptConfig(mc_samples=8192))
    assert est.value == pytest.approx(2 - np.pi / 2, rel=0.025)
    assert 0 < est.stderr < 0.02


def test_monge_shift_linear_cost():
    est = transport_cost(SHIFT, SimplexPath.linear_edge(0, 1, 1), SHIFT.coupling())
    assert est.value == pytest.approx(5.0, rel=0.005)


def test_monge_shift_curved_paths_cost_more():
    rng = np.random.default_rng(0)
    cfg = PathOptConfig(mc_samples=256, time_nodes=128)
    for _ in range(5):
        path = SimplexPath.fourier(0, 1, 1, N=3, coeffs=rng.normal(0, 0.3, (2, 3)))
        # by Jensen, int alpha_dot_1^2 >= (int alpha_dot_1)^2 = 1
        assert transport_cost(SHIFT, path, SHIFT.coupling(), cfg).value >= 5.0 - 1e-9


def test_cost_is_deterministic_given_seed():
    cfg = PathOptConfig(mc_samples=512, time_nodes=16, seed=3)
    a = transport_cost(STD, SimplexPath.linear_edge(0, 1, 1), STD.coupling(), cfg)
    b = transport_cost(STD, SimplexPath.linear_edge(0, 1, 1), STD.coupling(), cfg)
    assert a == b


def test_analytic_gradient_matches_finite_differences():
    coupling = IndependentCoupling((Gaussian([1.0, 0.0], np.eye(2)), Checkerboard()))
    model = FieldModel(2, 2, hidden=(8, 8), seed=1)
    rng = np.random.default_rng(2)
    path = SimplexPath.fourier(0, 2, 2, N=3, coeffs=rng.normal(0, 0.2, (3, 3)))
    cfg = PathOptConfig(mc_samples=64, time_nodes=8, fd_step=1e-6)
    fd = cost_gradient(model, path, coupling, cfg, method="finite-difference")
    an = cost_gradient(model, path, coupling, cfg, method="analytic")
    assert np.linalg.norm(an - fd) / np.linalg.norm(fd) < 1e-3


def test_analytic_gradient_needs_backward():
    path = SimplexPath.fourier(0, 1, 1, N=2)
    with pytest.raises(TypeError):
        cost_gradient(STD, path, STD.coupling(), PathOptConfig(mc_samples=16, time_nodes=4), method="analytic")


def test_zero_learning_rate_is_a_no_op():
    path = SimplexPath.fourier(0, 1, 1, N=2, coeffs=[[0.1, 0.0], [0.0, -0.1]])
    cfg = PathOptConfig(mc_samples=128, time_nodes=8, steps=5, lr=0.0)
    best, trace = optimize_path(SHIFT, path, SHIFT.coupling(), cfg)
    assert np.array_equal(best.coeffs, path.coeffs)
    assert np.all(trace[:, 0] == trace[0, 0])


def test_zero_steps():
    path = SimplexPath.fourier(0, 1, 1, N=2)
    best, trace = optimize_path(SHIFT, path, SHIFT.coupling(), PathOptConfig(mc_samples=64, time_nodes=4, steps=0))
    assert best == path and trace.shape == (1, 2)


def test_optimizer_recovers_straight_monge_path():
    rng = np.random.default_rng(4)
    initial = SimplexPath.fourier(0, 1, 1, N=4, coeffs=rng.normal(0, 0.3, (2, 4)))
    cfg = PathOptConfig(mc_samples=256, time_nodes=32, steps=150, lr=0.03)
    before = transport_cost(SHIFT, initial, SHIFT.coupling(), cfg).value
    best, trace = optimize_path(SHIFT, initial, SHIFT.coupling(), cfg)
    assert before > 5.5
    assert trace[:, 0].min() == pytest.approx(5.0, rel=0.02)
    alpha, _ = best(np.array([0.0, 1.0]))
    assert np.array_equal(alpha, np.eye(2))


def test_optimize_rejects_non_fourier_paths():
    with pytest.raises(TypeError):
        optimize_path(SHIFT, SimplexPath.linear_edge(0, 1, 1), SHIFT.coupling())


def test_config_validation():
    with pytest.raises(ValueError):
        PathOptConfig(lr=-1.0)
    with pytest.raises(ValueError):
        PathOptConfig(grad_method="adjoint")
    with pytest.raises(ValueError):
        PathOptConfig(mc_samples=1)


def test_csv_outputs():
    lines = cost_trace_to_csv(np.array([[1.0, 0.1], [0.5, 0.05]])).splitlines()
    assert lines == ["step,cost,stderr", "0,1.0,0.1", "1,0.5,0.05"]
    lines = alpha_table(SimplexPath.linear_edge(0, 2, 2), n=3).splitlines()
    assert lines[0] == "t,alpha_0,alpha_1,alpha_2"
    assert lines[2] == "0.5,0.5,0.0,0.5"
