import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qnav import nn
from qnav.nn import MlpArch, MlpParams

from oracles import central_difference


def relu(z):
    return np.maximum(z, 0.0)


def oracle_forward(x, p: MlpParams):
    # explicit per-unit sums rather than matrix products
    def affine(v, w, b):
        return np.array([sum(v[i] * w[i, j] for i in range(w.shape[0])) + b[j] for j in range(w.shape[1])])

    h1 = relu(affine(x, p.w1, p.b1))
    h2 = relu(affine(h1, p.w2, p.b2))
    return affine(h2, p.w3, p.b3)


def random_params(arch, rng, scale=1.0):
    p = nn.init_mlp(arch, rng)
    for a in p.arrays().values():
        a[...] = rng.normal(0, scale, a.shape)
    return p


@pytest.mark.parametrize("hidden, expected", [
    ((8, 8), 131), ((16, 8), 227), ((16, 16), 387), ((32, 16), 707),
    ((32, 32), 1283), ((64, 32), 2435), ((64, 64), 4611),
])
def test_param_counts(hidden, expected):
    arch = MlpArch(3, hidden, 3)
    assert nn.mlp_param_count(arch) == expected
    assert nn.init_mlp(arch, np.random.default_rng(0)).size == expected


def test_arch_validation():
    with pytest.raises(ValueError):
        MlpArch(3, (0, 4), 3)
    with pytest.raises(ValueError):
        MlpArch(3, (4, 4, 4), 3)


def test_init_ranges():
    arch = MlpArch(3, (64, 32), 3)
    p = nn.init_mlp(arch, np.random.default_rng(0))
    assert np.all(np.abs(p.w1) <= 1 / np.sqrt(3)) and np.all(np.abs(p.w2) <= 1 / np.sqrt(64))
    assert not np.any(p.b1) and not np.any(p.b3)


def test_zero_net_outputs_zero():
    arch = MlpArch(3, (4, 5), 3)
    p = nn.init_mlp(arch, np.random.default_rng(0))
    for a in p.arrays().values():
        a[...] = 0
    assert np.all(nn.mlp_forward([1.0, -2.0, 3.0], p, arch) == 0)


def test_identity_like_net():
    arch = MlpArch(1, (1, 1), 1)
    one, zero = np.ones((1, 1)), np.zeros(1)
    p = MlpParams(one, zero, one.copy(), zero.copy(), one.copy(), zero.copy())
    for x in (0.5, 3.0, 17.25):
        assert nn.mlp_forward([x], p, arch)[0] == x
    assert nn.mlp_forward([-2.0], p, arch)[0] == 0


def test_forward_matches_oracle():
    rng = np.random.default_rng(1)
    arch = MlpArch(3, (5, 4), 3)
    for _ in range(20):
        p = random_params(arch, rng)
        x = rng.normal(size=3)
        np.testing.assert_allclose(nn.mlp_forward(x, p, arch), oracle_forward(x, p), atol=1e-12)
    batch = rng.normal(size=(7, 3))
    np.testing.assert_allclose(nn.mlp_forward(batch, p, arch), [oracle_forward(x, p) for x in batch], atol=1e-12)


def test_shape_errors():
    arch = MlpArch()
    p = nn.init_mlp(arch, np.random.default_rng(0))
    with pytest.raises(ValueError):
        nn.mlp_forward(np.ones(4), p, arch)
    with pytest.raises(ValueError):
        nn.mlp_backward(np.ones(3), p, arch, np.ones(2))
    with pytest.raises(ValueError):
        p.check(MlpArch(3, (32, 32), 3))


def test_backward_trivial_cases():
    arch = MlpArch()
    p = random_params(arch, np.random.default_rng(2))
    g = nn.mlp_backward(np.array([0.3, -0.1, 0.8]), p, arch, np.zeros(3))
    assert all(not np.any(a) for a in g.arrays().values())

    lin = MlpArch(1, (1, 1), 1)
    one, zero = np.ones((1, 1)), np.zeros(1)
    q = MlpParams(one, zero, one.copy(), zero.copy(), one.copy(), zero.copy())
    g = nn.mlp_backward(np.array([2.5]), q, lin, np.ones(1))
    assert g.w1[0, 0] == 2.5


def test_backward_matches_finite_differences():
    rng = np.random.default_rng(3)
    names = [k for pair in nn.LAYER_NAMES for k in pair]
    checked = 0
    while checked < 50:
        arch = MlpArch(3, tuple(int(h) for h in rng.integers(1, 9, 2)), 3)
        p = random_params(arch, rng)
        x = rng.normal(size=3)
        up = rng.normal(size=3)
        _, g = nn.mlp_forward_backward(x, p, arch, up)
        for name in names:
            base = p.arrays()[name]

            def f(v, name=name):
                q = p.copy()
                getattr(q, name)[...] = v
                return np.array(up @ nn.mlp_forward(x, q, arch))

            fd = central_difference(f, base.copy(), 1e-6)
            np.testing.assert_allclose(getattr(g, name), fd, rtol=1e-6, atol=1e-8)
        checked += 1


def test_batch_gradient_is_sum_of_per_sample():
    rng = np.random.default_rng(4)
    arch = MlpArch(3, (6, 5), 3)
    p = random_params(arch, rng)
    X, U = rng.normal(size=(4, 3)), rng.normal(size=(4, 3))
    _, g = nn.mlp_forward_backward(X, p, arch, U)
    parts = [nn.mlp_backward(X[i], p, arch, U[i]) for i in range(4)]
    for k, v in g.arrays().items():
        np.testing.assert_allclose(v, sum(q.arrays()[k] for q in parts), atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.01, 100))
def test_final_layer_homogeneity(seed, c):
    rng = np.random.default_rng(seed)
    arch = MlpArch(3, (8, 8), 3)
    p = random_params(arch, rng)
    x = rng.normal(size=3)
    q = p.copy()
    q.w3 *= c
    q.b3 *= c
    np.testing.assert_allclose(nn.mlp_forward(x, q, arch), c * nn.mlp_forward(x, p, arch), rtol=1e-10, atol=1e-12)


def test_adam_zero_gradient():
    params = {"a": np.array([1.0, 2.0])}
    state = nn.adam_state(params, {"a": 0.1})
    nn.optimizer_step(params, {"a": np.zeros(2)}, state)
    assert state.step == 1
    np.testing.assert_array_equal(params["a"], [1.0, 2.0])


def test_adam_moves_against_gradient_sign():
    params = {"a": np.array([0.0, 0.0])}
    state = nn.adam_state(params, {"a": 0.01})
    for _ in range(100):
        nn.optimizer_step(params, {"a": np.array([3.0, -0.2])}, state)
    assert params["a"][0] < 0 < params["a"][1]
    # bias-corrected Adam takes ~lr-sized steps under a constant gradient
    np.testing.assert_allclose(np.abs(params["a"]), 1.0, rtol=1e-6)


def test_adam_first_step_matches_recursion():
    params = {"a": np.array([0.5])}
    state = nn.adam_state(params, {"a": 0.001})
    nn.optimizer_step(params, {"a": np.array([4.0])}, state)
    m, v = 0.1 * 4.0 / 0.1, 0.001 * 16.0 / 0.001
    assert params["a"][0] == pytest.approx(0.5 - 0.001 * m / (np.sqrt(v) + 1e-8), abs=1e-15)


def test_adam_quadratic_converges():
    params = {"p": np.array([0.0])}
    state = nn.adam_state(params, {"p": 0.01})
    for step in range(1, 2001):
        nn.optimizer_step(params, {"p": 2 * (params["p"] - 5.0)}, state)
        if abs(params["p"][0] - 5.0) < 0.01:
            break
    assert abs(params["p"][0] - 5.0) < 0.01 and step <= 2000


def test_adam_rejects_non_finite():
    params = {"a": np.array([1.0]), "b": np.array([2.0])}
    state = nn.adam_state(params, {"a": 0.1, "b": 0.1})
    with pytest.raises(nn.NonFiniteGradientError):
        nn.optimizer_step(params, {"a": np.array([1.0]), "b": np.array([np.nan])}, state)
    assert params["a"][0] == 1.0 and state.step == 0 and not np.any(state.m["a"])


def test_adam_config_errors():
    with pytest.raises(ValueError, match="learning rate"):
        nn.adam_state({"a": np.zeros(1)}, {})
    params = {"a": np.zeros(2)}
    state = nn.adam_state(params, {"a": 0.1})
    with pytest.raises(ValueError, match="shape"):
        nn.optimizer_step(params, {"a": np.zeros(3)}, state)
