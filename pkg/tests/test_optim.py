import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from densepath.errors import ShapeError
from densepath.optim import Adam, AdamHyper, AdamState, adam_step
from densepath.tensor import Tensor, backward, zero_grads

from oracles import adam_scalar


def test_defaults():
    h = AdamHyper()
    assert (h.lr, h.beta1, h.beta2, h.eps) == (1e-4, 0.9, 0.999, 1e-8)


@pytest.mark.parametrize("kw", [{"lr": 0.0}, {"beta1": 1.0}, {"beta2": -0.1}, {"eps": 0.0}])
def test_invalid_hyper(kw):
    with pytest.raises(ValueError):
        AdamHyper(**kw)


def test_zero_gradient_leaves_params(rng):
    p = {"w": Tensor(rng.normal(size=(3, 2)), requires_grad=True)}
    before = p["w"].data.copy()
    s = AdamState()
    adam_step(p, {"w": np.zeros((3, 2))}, s, AdamHyper())
    assert s.t == 1
    np.testing.assert_array_equal(p["w"].data, before)


def test_first_step_is_signed_lr(rng):
    g = rng.normal(size=20)
    p = {"w": Tensor(np.zeros(20), requires_grad=True)}
    h = AdamHyper(lr=0.01)
    adam_step(p, {"w": g}, AdamState(), h)
    tol = h.lr * h.eps / np.abs(g)
    assert np.all(np.abs(p["w"].data + h.lr * np.sign(g)) <= tol + 1e-18)


def test_quadratic_converges_and_tracks_scalar_oracle():
    lr = 0.1
    ref = adam_scalar(0.0, lambda p, t: 2 * (p - 3.0), 100, lr)
    p = {"p": Tensor(np.array([0.0]), requires_grad=True)}
    s, h = AdamState(), AdamHyper(lr=lr)
    for t in range(100):
        x = p["p"]
        backward(((x - 3.0) * (x - 3.0)).sum())
        adam_step(p, {"p": x.grad}, s, h)
        zero_grads(p)
        assert abs(p["p"].data[0] - ref[t]) <= 1e-12
    assert abs(p["p"].data[0] - 3.0) < 0.5


def test_elementwise_lockstep_with_scalar_oracle(rng):
    shape = (3, 4)
    gs = rng.normal(size=(100,) + shape)
    init = rng.normal(size=shape)
    p = {"w": Tensor(init.copy(), requires_grad=True)}
    s, h = AdamState(), AdamHyper(lr=1e-2)
    for t in range(100):
        adam_step(p, {"w": gs[t]}, s, h)
    for idx in np.ndindex(shape):
        ref = adam_scalar(init[idx], lambda _p, t: gs[t - 1][idx], 100, 1e-2)
        assert abs(p["w"].data[idx] - ref[-1]) <= 1e-12


@given(st.integers(0, 2**32 - 1), st.integers(1, 30))
@settings(max_examples=30, deadline=None)
def test_second_moment_stays_non_negative(seed, steps):
    r = np.random.default_rng(seed)
    p = {"w": Tensor(r.normal(size=5), requires_grad=True)}
    s = AdamState()
    for _ in range(steps):
        adam_step(p, {"w": r.normal(0, 10.0 ** r.integers(-5, 5), size=5)}, s, AdamHyper(lr=1e-3))
        assert np.all(s.v["w"] >= 0)
    assert s.t == steps


def test_update_commutes_with_permutation(rng):
    x0 = rng.normal(size=12)
    gs = rng.normal(size=(5, 12))
    perm = rng.permutation(12)
    a = {"w": Tensor(x0.copy(), requires_grad=True)}
    b = {"w": Tensor(x0[perm].copy(), requires_grad=True)}
    sa, sb, h = AdamState(), AdamState(), AdamHyper(lr=0.05)
    for g in gs:
        adam_step(a, {"w": g}, sa, h)
        adam_step(b, {"w": g[perm]}, sb, h)
    np.testing.assert_array_equal(a["w"].data[perm], b["w"].data)


def test_rejects_unknown_name_and_shape():
    p = {"w": Tensor(np.zeros(3), requires_grad=True)}
    with pytest.raises(ShapeError, match="unknown"):
        adam_step(p, {"v": np.zeros(3)}, AdamState(), AdamHyper())
    with pytest.raises(ShapeError, match="shape"):
        adam_step(p, {"w": np.zeros(4)}, AdamState(), AdamHyper())


def test_rejects_non_finite_gradient_naming_parameter():
    p = {"head.w": Tensor(np.zeros(2), requires_grad=True)}
    s = AdamState()
    with pytest.raises(FloatingPointError, match="head.w"):
        adam_step(p, {"head.w": np.array([1.0, np.nan])}, s, AdamHyper())
    assert s.t == 0


def test_zero_grads_contract(rng):
    x = Tensor(rng.normal(size=3), requires_grad=True)
    backward((x * x).sum())
    once = x.grad.copy()
    zero_grads({"x": x})
    assert x.grad is None
    zero_grads({"x": x})
    zero_grads({"x": x})
    assert x.grad is None
    backward((x * x).sum())
    np.testing.assert_array_equal(x.grad, once)


def test_adam_wrapper_steps_only_params_with_grads(rng):
    params = {"a": Tensor(np.ones(2), requires_grad=True), "b": Tensor(np.ones(2), requires_grad=True)}
    opt = Adam(params, lr=0.1)
    backward((params["a"] * 2.0).sum())
    opt.step()
    opt.zero_grad()
    assert np.all(params["a"].data < 1.0)
    np.testing.assert_array_equal(params["b"].data, 1.0)
    assert params["a"].grad is None and opt.state.t == 1
