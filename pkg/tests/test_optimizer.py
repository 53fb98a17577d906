"""Tests for the learning-rate schedule, LARS and Nesterov SGD."""

import numpy as np
import pytest

from app.core.exceptions import ContractError, NumericError
from app.core.tensor import Tensor
from app.models.config import LarsConfig, ScheduleConfig
from app.business.optimizer import Lars, cosine_lr, lars_step, sgd_nesterov_step


def test_cosine_endpoints_and_midpoint(schedule):
    """0 at step 0, base_lr at the end of warmup, half-way down at the midpoint."""
    assert cosine_lr(0, schedule) == 0.0
    assert cosine_lr(10, schedule) == pytest.approx(1.0)
    assert cosine_lr(5, schedule) == pytest.approx(0.5)
    assert cosine_lr(55, schedule) == pytest.approx(0.5, abs=1e-12)
    assert cosine_lr(100, schedule) == 0.0


def test_cosine_clamps_past_the_end(schedule):
    assert cosine_lr(1000, schedule) == 0.0


def test_cosine_is_continuous_and_bounded(schedule):
    values = np.array([cosine_lr(s, schedule) for s in range(101)])
    assert np.all(values >= 0.0) and np.all(values <= 1.0 + 1e-12)
    assert np.max(np.abs(np.diff(values))) <= 0.1 + 1e-12


def test_cosine_without_warmup_starts_at_base():
    cfg = ScheduleConfig(base_lr=0.3, total_steps=10, warmup_steps=0)
    assert cosine_lr(0, cfg) == pytest.approx(0.3)


def test_cosine_rejects_negative_step(schedule):
    with pytest.raises(ContractError):
        cosine_lr(-1, schedule)


def test_lars_zero_lr_is_a_no_op(rng):
    """lr=0 leaves parameters bitwise unchanged."""
    w = Tensor(rng.normal(size=(3, 2)), requires_grad=True, name="layer0.weight")
    before = w.data.copy()
    lars_step([w], [rng.normal(size=(3, 2))], 0.0, LarsConfig())
    np.testing.assert_array_equal(w.data, before)


def test_lars_zero_norm_parameter_uses_plain_momentum_step():
    """A zero parameter bypasses the trust ratio."""
    w = Tensor(np.zeros((2, 2)), requires_grad=True, name="layer0.weight")
    g = np.full((2, 2), 0.5)
    lars_step([w], [g], 0.1, LarsConfig(momentum=0.0, weight_decay=0.0))
    np.testing.assert_allclose(w.data, -0.05)


def test_lars_scalar_update_magnitude():
    """param=1, grad=1, wd=0, eta=0.001, momentum=0, lr=1 moves by 0.001."""
    w = Tensor(np.array(1.0), requires_grad=True, name="scale")
    lars_step([w], [np.array(1.0)], 1.0, LarsConfig(momentum=0.0, weight_decay=0.0, trust_coefficient=1e-3))
    assert 1.0 - w.data == pytest.approx(0.001, rel=1e-6)


def test_lars_excluded_parameters_skip_decay_and_trust():
    """Biases take the raw gradient step, without weight decay."""
    b = Tensor(np.ones(3), requires_grad=True, name="layer0.bias")
    lars_step([b], [np.full(3, 0.2)], 0.5, LarsConfig(momentum=0.0, weight_decay=0.1))
    np.testing.assert_allclose(b.data, 0.9)


def test_lars_momentum_accumulates():
    """The second step carries mu times the first step plus the new trust-scaled gradient."""
    w = Tensor(np.ones((2, 2)), requires_grad=True, name="layer0.weight")
    cfg = LarsConfig(momentum=0.5, weight_decay=0.0, trust_coefficient=1.0)
    g = np.ones((2, 2))
    buffers = lars_step([w], [g], 0.01, cfg)
    first = 1.0 - w.data[0, 0]
    start = w.data[0, 0]
    lars_step([w], [g], 0.01, cfg, buffers)
    assert first == pytest.approx(0.01, rel=1e-6)
    assert start - w.data[0, 0] == pytest.approx(0.5 * 0.01 + 0.01 * start * 2 / (2 + 1e-9), rel=1e-6)


def test_lars_nan_gradient_aborts_before_any_update(rng):
    """A NaN in the second gradient leaves the first parameter untouched."""
    a = Tensor(rng.normal(size=(2, 2)), requires_grad=True, name="a.weight")
    b = Tensor(rng.normal(size=(2, 2)), requires_grad=True, name="b.weight")
    before = a.data.copy()
    with pytest.raises(NumericError):
        lars_step([a, b], [np.ones((2, 2)), np.full((2, 2), np.nan)], 0.1, LarsConfig())
    np.testing.assert_array_equal(a.data, before)


def test_lars_huge_trust_coefficient_stays_finite(rng):
    """The epsilon in the ratio keeps tiny gradients from blowing up."""
    w = Tensor(rng.normal(size=(3, 3)), requires_grad=True, name="w")
    lars_step([w], [np.full((3, 3), 1e-300)], 1.0, LarsConfig(trust_coefficient=1e6, weight_decay=0.0))
    assert np.all(np.isfinite(w.data))


def test_lars_reduces_a_convex_quadratic():
    """f(W) = |W|^2 / 2 drops by 100x within a few hundred steps."""
    w = Tensor(np.random.default_rng(0).normal(size=(4, 3)), requires_grad=True, name="layer.weight")
    start = 0.5 * float(np.sum(w.data**2))
    opt = Lars([w], LarsConfig(weight_decay=0.0))
    for _ in range(300):
        opt.step(5.0, grads=[w.data.copy()])
    assert 0.5 * float(np.sum(w.data**2)) < start / 100


def test_lars_load_buffers_checks_shapes(rng):
    w = Tensor(np.ones((2, 2)), requires_grad=True, name="w")
    opt = Lars([w], LarsConfig())
    with pytest.raises(ContractError):
        opt.load_buffers([np.zeros(3)])


def test_lars_uses_tensor_gradients_by_default():
    w = Tensor(np.ones((2, 2)), requires_grad=True, name="layer.bias")
    w.grad = np.ones((2, 2))
    Lars([w], LarsConfig(momentum=0.0, exclude_vectors=False)).step(0.1)
    np.testing.assert_allclose(w.data, 0.9)


def test_nesterov_without_momentum_is_plain_sgd():
    x = Tensor(np.array([1.0, -2.0]), requires_grad=True)
    sgd_nesterov_step([x], [np.array([0.5, 0.5])], 0.1, momentum=0.0)
    np.testing.assert_allclose(x.data, [0.95, -2.05])


def test_nesterov_two_steps_on_a_parabola():
    """f(x) = x^2/2 from x=1, lr=0.1, momentum 0.9: 1 -> 0.81 -> 0.5751."""
    x = Tensor(np.array(1.0), requires_grad=True)
    buffers = sgd_nesterov_step([x], [x.data.copy()], 0.1, 0.9)
    assert float(x.data) == pytest.approx(0.81, abs=1e-12)
    sgd_nesterov_step([x], [x.data.copy()], 0.1, 0.9, buffers)
    assert float(x.data) == pytest.approx(0.5751, abs=1e-12)


def test_nesterov_zero_lr_is_a_no_op():
    x = Tensor(np.array([3.0]), requires_grad=True)
    sgd_nesterov_step([x], [np.array([1.0])], 0.0, 0.9)
    assert x.data[0] == 3.0


def test_gradient_shape_mismatch(rng):
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ContractError):
        sgd_nesterov_step([x], [np.ones(4)], 0.1, 0.9)
