import numpy as np
import pytest

from mmflow.couplings import Gaussian, IndependentCoupling, interpolant, sample_coupling
from mmflow.fields import (
    FieldModel,
    ScoreUndefinedError,
    TrainConfig,
    TrainingDivergedError,
    load_checkpoint,
    loss_and_grad,
    loss_batch,
    save_checkpoint,
    score,
    trace_to_csv,
    train,
)
from mmflow.metrics import energy_distance
from mmflow.oracle import GaussianProblem
from mmflow.transport import IntegratorConfig, transport


class Zero:
    def __call__(self, alpha, x):
        x = np.atleast_2d(x)
        return np.zeros((len(x), 2, x.shape[1]))


class Cheat:
    """Returns the true endpoints of a fixed joint sample."""

    def __init__(self, joint):
        self.joint = joint

    def __call__(self, alpha, x):
        return self.joint


def std_pair(m=0.0):
    return GaussianProblem(([0.0], [m]), ([[1.0]], [[1.0]]))


def test_zero_model_loss_is_zero():
    joint = np.random.default_rng(0).normal(size=(8, 2, 1))
    alpha = np.full((8, 2), 0.5)
    assert loss_batch(Zero(), alpha, joint) == 0.0


def test_cheat_model_loss():
    joint = np.random.default_rng(1).normal(size=(1, 3, 2))
    alpha = np.array([[0.2, 0.3, 0.5]])
    assert loss_batch(Cheat(joint), alpha, joint) == pytest.approx(-np.sum(joint**2))


def test_empty_batch():
    with pytest.raises(ValueError):
        loss_batch(Zero(), np.zeros((0, 2)), np.zeros((0, 2, 1)))


def test_parameter_gradient_matches_finite_differences():
    model = FieldModel(2, 2, hidden=(8, 8), seed=3)
    rng = np.random.default_rng(4)
    joint = rng.normal(size=(4, 3, 2))
    alpha = rng.dirichlet(np.ones(3), size=4)
    _, grad = loss_and_grad(model, alpha, joint)
    p = model.params
    fd = np.empty_like(p)
    h = 1e-5
    for n in range(p.size):
        keep = p[n]
        p[n] = keep + h
        up = loss_batch(model, alpha, joint)
        p[n] = keep - h
        dn = loss_batch(model, alpha, joint)
        p[n] = keep
        fd[n] = (up - dn) / (2 * h)
    assert np.linalg.norm(grad - fd) / np.linalg.norm(fd) < 1e-4


def test_input_gradients_match_finite_differences():
    model = FieldModel(1, 2, hidden=(8,), activation="tanh", seed=5)
    rng = np.random.default_rng(6)
    alpha = rng.dirichlet(np.ones(2), size=3)
    x = rng.normal(size=(3, 2))
    w = rng.normal(size=(3, 2, 2))
    _, cache = model.forward(alpha, x)
    _, ga, gx = model.backward(cache, w, need_params=False)
    h = 1e-6
    for j in range(2):
        e = np.zeros(2)
        e[j] = h
        fd = (np.sum(w * model(alpha, x + e), axis=(1, 2)) - np.sum(w * model(alpha, x - e), axis=(1, 2))) / (2 * h)
        assert np.allclose(gx[:, j], fd, atol=1e-7)
        fd = (np.sum(w * model(alpha + e, x), axis=(1, 2)) - np.sum(w * model(alpha - e, x), axis=(1, 2))) / (2 * h)
        assert np.allclose(ga[:, j], fd, atol=1e-7)


def small_config(**kw):
    base = dict(batch_size=256, steps=200, hidden=(16, 16), seed=7)
    base.update(kw)
    return TrainConfig(**base)


def test_training_is_deterministic():
    coupling = std_pair(1.0).coupling()
    m1, t1 = train(coupling, small_config())
    m2, t2 = train(coupling, small_config())
    assert np.array_equal(t1, t2)
    assert np.array_equal(m1.params, m2.params)
    _, t3 = train(coupling, small_config(seed=8))
    assert not np.array_equal(t1, t3)


def test_loss_approaches_oracle_minimum():
    # for standard normals sum_k E|g_k|^2 = sum_k alpha_k^2 / |alpha|^2 = 1, so the minimum is -1
    coupling = std_pair().coupling()
    _, trace = train(coupling, small_config(steps=1500, hidden=(32, 32)))
    assert trace[-300:].mean() < trace[:50].mean()
    assert trace[-300:].mean() < -1.0 + 0.1


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_reports_step():
    coupling = std_pair().coupling()
    with pytest.raises(TrainingDivergedError) as info:
        train(coupling, small_config(lr=1e200, optimizer="sgd", steps=50))
    assert 0 < info.value.step < 50


def test_invalid_config():
    with pytest.raises(ValueError):
        TrainConfig(lr=0.0)
    with pytest.raises(ValueError):
        TrainConfig(alpha_mode="sideways")
    assert TrainConfig.from_dict(TrainConfig().to_dict()) == TrainConfig()


def test_checkpoint_round_trip(tmp_path):
    model = FieldModel(2, 2, hidden=(8, 4), seed=9)
    text = save_checkpoint(model, tmp_path / "ck.json", extra={"note": "x"})
    back, meta = load_checkpoint(tmp_path / "ck.json")
    assert np.array_equal(back.params, model.params)
    assert meta["note"] == "x" and meta["hidden"] == [8, 4]
    assert save_checkpoint(back, extra={"note": "x"}) == text
    x = np.random.default_rng(0).normal(size=(5, 2))
    assert np.array_equal(back(np.full(3, 1 / 3), x), model(np.full(3, 1 / 3), x))


def test_trace_csv():
    text = trace_to_csv(np.array([1.5, -0.25]))
    assert text.splitlines() == ["step,loss", "0,1.5", "1,-0.25"]


def test_score_examples():
    prob = std_pair()
    assert np.allclose(score(prob, [0.5, 0.5], np.array([1.0])), [-2.0])
    # analytic score of N(0, 0.5) at 1
    assert np.allclose(score(prob, [0.5, 0.5], np.array([1.0])), -1.0 / 0.5)
    x = np.random.default_rng(1).normal(size=(7, 1))
    assert np.allclose(score(prob, [1.0, 0.0], x), -x)
    with pytest.raises(ScoreUndefinedError):
        score(prob, [0.0, 1.0], np.array([1.0]))
    with pytest.raises(ScoreUndefinedError):
        score(prob, [5e-4, 1 - 5e-4], np.array([1.0]))


def test_single_edge_mode_matches_two_marginal_model():
    pair = IndependentCoupling((Gaussian([2.0], [[1.0]]),))
    triple = IndependentCoupling((Gaussian([2.0], [[1.0]]), Gaussian([-3.0], [[0.5]])))
    cfg = dict(steps=2000, hidden=(32, 32), batch_size=256)
    m_pair, _ = train(pair, small_config(**cfg))
    m_edge, _ = train(triple, small_config(alpha_mode="single-edge(0,1)", **cfg))
    x0 = np.random.default_rng(10).standard_normal((2000, 1))
    integ = IntegratorConfig("rk4", 50)
    a = transport(m_pair, "edge(0,1)", x0, integ)
    b = transport(m_edge, "edge(0,1)", x0, integ)
    target = Gaussian([2.0], [[1.0]]).sample(2000, np.random.default_rng(11))
    assert energy_distance(a, b) < 0.01
    assert energy_distance(b, target) < 0.01
    assert abs(b.mean() - 2.0) < 0.1 and abs(b.std() - 1.0) < 0.1


def test_model_rejects_bad_shapes():
    model = FieldModel(1, 2, hidden=(4,))
    with pytest.raises(ValueError):
        model(np.array([0.5, 0.5]), np.zeros((3, 3)))
    with pytest.raises(ValueError):
        model(np.array([0.5, 0.5]), np.full((1, 2), np.nan))


def test_trained_fields_have_oracle_shape():
    prob = std_pair(2.0)
    joint = sample_coupling(prob.coupling(), 16, np.random.default_rng(2))
    alpha = np.random.default_rng(3).dirichlet(np.ones(2), size=16)
    model = FieldModel(1, 1, hidden=(8,))
    assert model(alpha, interpolant(alpha, joint)).shape == prob(alpha, interpolant(alpha, joint)).shape
