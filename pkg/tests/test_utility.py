import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pearl.errors import ValidationError
from pearl.utility import (ACTIVATIONS, CobbDouglasModel, IcnnModel, activation, activation_deriv,
                           icnn_param_count, init_model, load_model, model_from_dict, project_weights,
                           save_model)


def random_icnn(seed, k=3, layers=3, hidden=4, act="concave-log"):
    """Constraint-satisfying network with nonzero biases and standardization."""
    rng = np.random.default_rng(seed)
    m = init_model("icnn", k=k, layers=layers, hidden=hidden, activation=act, seed=seed)
    b = [rng.normal(0, 0.5, size=v.shape) for v in m.biases]
    m = IcnnModel(m.weights_x, m.weights_z, tuple(b), activation=act,
                  input_scale=rng.uniform(0.1, 1.0, k), input_shift=rng.normal(0, 1, k))
    return m


def fd_grad(f, x, h=1e-5):
    g = np.zeros_like(x)
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        g[j] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def assert_rel_close(a, b, rtol):
    scale = max(np.abs(b).max(), 1e-8)
    assert np.abs(a - b).max() <= rtol * scale, (a, b)


# activations

def test_activation_branches():
    assert activation("concave-tanh", 0.0) == 0.0
    assert activation("concave-tanh", -2.0) == -2.0
    assert activation("concave-sigmoid", 0.0) == 0.5
    assert activation("concave-sigmoid", -1e-12) == pytest.approx(0.5)
    assert activation_deriv("concave-sigmoid", 0.0) == 0.25
    assert activation_deriv("concave-sigmoid", -1.0) == 0.25
    assert activation("concave-log", 0.0, 0.01) == pytest.approx(math.log(0.01))
    assert activation("concave-log", 0.0, 0.01) == pytest.approx(-4.6052, abs=1e-4)


@pytest.mark.parametrize("kind", ACTIVATIONS)
def test_activation_c1_concave_increasing(kind):
    a = np.linspace(-3, 3, 601)
    d = activation_deriv(kind, a)
    assert np.all(d > 0)
    assert np.all(np.diff(d) <= 1e-12)
    h = 1e-7
    fd = (activation(kind, a + h) - activation(kind, a - h)) / (2 * h)
    np.testing.assert_allclose(d, fd, rtol=1e-5)
    eps = 1e-9
    assert activation(kind, eps) == pytest.approx(activation(kind, -eps), abs=1e-6)
    assert activation_deriv(kind, eps) == pytest.approx(activation_deriv(kind, -eps), rel=1e-6)


def test_unknown_activation():
    with pytest.raises(ValidationError):
        activation("relu", 1.0)


# Cobb-Douglas

def test_cd_eval_examples():
    assert CobbDouglasModel.from_theta([0.5, 0.5]).eval([4.0, 9.0]) == pytest.approx(6.0)
    assert CobbDouglasModel.from_theta([0.4, 0.6]).eval([1.0, 1.0]) == pytest.approx(1.0)


def test_cd_zero_bundle_is_zero():
    assert CobbDouglasModel.from_theta([0.5, 0.5]).eval([0.0, 3.0]) == 0.0


def test_cd_grad_x_example():
    g = CobbDouglasModel.from_theta([0.5, 0.5]).grad_x([1.0, 1.0])
    np.testing.assert_allclose(g, [0.5, 0.5])


def test_cd_theta_derivative_example():
    # U with theta = (t, 1 - t) at x = (e, 1): dU/dt = U (ln e - ln 1) = U
    t = 0.3
    x = np.array([math.e, 1.0])
    model = CobbDouglasModel.from_theta([t, 1 - t])
    gt = model.grad_theta(x)
    assert gt[0] - gt[1] == pytest.approx(model.eval(x))
    h = 1e-6
    fd = (CobbDouglasModel.from_theta([t + h, 1 - t - h]).eval(x)
          - CobbDouglasModel.from_theta([t - h, 1 - t + h]).eval(x)) / (2 * h)
    assert fd == pytest.approx(model.eval(x), rel=1e-6)


def test_cd_unit_bundle_zero_param_grad():
    model = CobbDouglasModel.from_theta([0.2, 0.3, 0.5])
    np.testing.assert_allclose(model.grad_params(np.ones(3)), 0.0, atol=1e-15)


def test_cd_simplex_exact():
    model = CobbDouglasModel(np.array([3.0, -2.0, 0.5]))
    assert np.all(model.theta > 0)
    assert abs(model.theta.sum() - 1.0) < 1e-12


# ICNN

def test_icnn_single_layer_sum():
    m = IcnnModel(weights_x=([[1.0, 1.0]],), weights_z=(), biases=([0.0],))
    assert m.eval([2.0, 3.0]) == pytest.approx(5.0)


def test_icnn_zero_input_weights_zero_gradient():
    m = init_model("icnn", k=2, seed=0)
    m = m.with_params(np.where(m.weight_mask(), 0.0, m.params))
    np.testing.assert_array_equal(m.grad_x(np.array([[1.0, 2.0], [3.0, 0.5]])), 0.0)


def test_param_count():
    assert icnn_param_count(2, 3, 2) == 2 * 2 + 2 + (2 * 2 + 2 * 2 + 2) + (2 + 2 + 1) == 21
    assert init_model("icnn", k=2, layers=3, hidden=2).n_params == 21
    assert init_model("icnn", k=5, layers=4, hidden=3).n_params == icnn_param_count(5, 4, 3)


def test_init_deterministic():
    cd = init_model("cd", k=4, deterministic=True)
    np.testing.assert_allclose(cd.theta, 0.25)
    a = init_model("icnn", k=3, seed=11)
    b = init_model("icnn", k=3, seed=11)
    np.testing.assert_array_equal(a.params, b.params)
    assert a.satisfies_constraints()


def test_flatten_round_trip():
    m = random_icnn(3)
    assert np.array_equal(m.with_params(m.params).params, m.params)


def test_project_weights():
    m = init_model("icnn", k=2, seed=1)
    params = m.params.copy()
    idx = np.nonzero(m.weight_mask())[0][0]
    params[idx] = -0.3
    bad = m.with_params(params)
    assert not bad.satisfies_constraints()
    fixed = project_weights(bad)
    assert fixed.params[idx] == 0.0 and fixed.satisfies_constraints()
    np.testing.assert_array_equal(project_weights(fixed).params, fixed.params)
    # biases are untouched
    bias = ~m.weight_mask()
    np.testing.assert_array_equal(fixed.params[bias], bad.params[bias])


def test_projected_model_is_concave():
    rng = np.random.default_rng(0)
    m = init_model("icnn", k=3, hidden=4, seed=2)
    m = project_weights(m.with_params(m.params + rng.normal(0, 0.5, m.n_params)))
    a, b = rng.uniform(0, 10, (2, 300, 3))
    lam = rng.uniform(0, 1, (300, 1))
    mid = m.eval(lam * a + (1 - lam) * b)
    assert np.all(mid >= lam[:, 0] * m.eval(a) + (1 - lam[:, 0]) * m.eval(b) - 1e-9)


@pytest.mark.parametrize("act", ACTIVATIONS)
def test_concavity_midpoint(act):
    rng = np.random.default_rng(42)
    fails = 0
    for t in range(1000):
        m = random_icnn(t % 20, act=act)
        a, b = rng.uniform(0, 20, (2, 3))
        lam = rng.uniform()
        if m.eval(lam * a + (1 - lam) * b) < lam * m.eval(a) + (1 - lam) * m.eval(b) - 1e-9:
            fails += 1
    assert fails == 0


def test_cd_concavity_midpoint():
    rng = np.random.default_rng(7)
    for _ in range(200):
        m = CobbDouglasModel.from_theta(rng.dirichlet(np.ones(3)))
        a, b = rng.uniform(0, 20, (2, 3))
        lam = rng.uniform()
        assert m.eval(lam * a + (1 - lam) * b) >= lam * m.eval(a) + (1 - lam) * m.eval(b) - 1e-9


@pytest.mark.parametrize("act", ACTIVATIONS)
def test_monotone_probes(act):
    rng = np.random.default_rng(1)
    for t in range(1000):
        m = random_icnn(t % 20, act=act)
        x = rng.uniform(0.01, 20, 3)
        step = np.zeros(3)
        step[rng.integers(3)] = rng.uniform(1e-3, 5)
        assert m.eval(x + step) >= m.eval(x)


def test_cd_monotone():
    rng = np.random.default_rng(2)
    for _ in range(200):
        m = CobbDouglasModel.from_theta(rng.dirichlet(np.ones(4)))
        x = rng.uniform(0.01, 20, 4)
        step = np.zeros(4)
        step[rng.integers(4)] = rng.uniform(1e-3, 5)
        assert m.eval(x + step) >= m.eval(x)


@pytest.mark.parametrize("act", ACTIVATIONS)
def test_icnn_gradients_match_finite_differences(act):
    rng = np.random.default_rng(3)
    for t in range(100):
        m = random_icnn(t, act=act)
        x = rng.uniform(0.5, 10, 3)
        assert_rel_close(m.grad_x(x), fd_grad(m.eval, x), 1e-4)
        th = m.params
        fd = fd_grad(lambda v: m.with_params(v).eval(x), th)
        assert_rel_close(m.grad_params(x), fd, 1e-4)


def test_cd_gradients_match_finite_differences():
    rng = np.random.default_rng(4)
    for _ in range(100):
        m = CobbDouglasModel(rng.normal(0, 1, 3))
        x = rng.uniform(0.5, 10, 3)
        assert_rel_close(m.grad_x(x), fd_grad(m.eval, x), 1e-4)
        fd = fd_grad(lambda v: m.with_params(v).eval(x), m.params)
        assert_rel_close(m.grad_params(x), fd, 1e-4)


def test_weighted_param_grad_is_weighted_sum():
    m = random_icnn(5)
    rng = np.random.default_rng(0)
    x = rng.uniform(0.5, 5, (7, 3))
    w = rng.normal(size=7)
    np.testing.assert_allclose(m.grad_params(x, w), w @ m.grad_params(x), rtol=1e-10, atol=1e-12)


def test_batch_and_single_agree():
    m = random_icnn(6)
    x = np.random.default_rng(1).uniform(0.5, 5, (4, 3))
    np.testing.assert_allclose(m.eval(x), [m.eval(r) for r in x])
    np.testing.assert_allclose(m.grad_x(x), [m.grad_x(r) for r in x])


def test_wrong_shape_rejected():
    with pytest.raises(ValidationError):
        init_model("icnn", k=2).eval([1.0, 2.0, 3.0])
    with pytest.raises(ValidationError):
        IcnnModel(weights_x=([[1.0, 1.0]], [[1.0, 1.0]]), weights_z=(), biases=([0.0], [0.0]))


@given(st.integers(0, 1000), st.sampled_from(ACTIVATIONS))
def test_serialization_round_trip(seed, act):
    m = random_icnn(seed, act=act)
    back = model_from_dict(json.loads(json.dumps(m.to_dict())))
    np.testing.assert_array_equal(back.params, m.params)
    x = np.array([1.0, 2.0, 3.0])
    assert back.eval(x) == m.eval(x)


def test_save_load_keeps_extras(tmp_path):
    m = CobbDouglasModel.from_theta([0.25, 0.75])
    save_model(m, tmp_path / "m.json", epsilon=0.9)
    back, extras = load_model(tmp_path / "m.json")
    np.testing.assert_allclose(back.theta, m.theta)
    assert extras == {"epsilon": 0.9}
    data = json.loads((tmp_path / "m.json").read_text())
    assert list(data)[:3] == ["kind", "k", "theta"]


def test_icnn_json_fields(tmp_path):
    m = init_model("icnn", k=2)
    save_model(m, tmp_path / "m.json")
    data = json.loads((tmp_path / "m.json").read_text())
    for key in ("kind", "k", "layers", "activation", "delta", "weights_z", "weights_x", "biases",
                "input_scale", "input_shift"):
        assert key in data
