"""Tests for the online/target network pair."""

import numpy as np
import pytest

from app.core import tensor as T
from app.core.exceptions import ConfigurationError, DimensionError
from app.core.tensor import backward
from app.business.networks import (
    embed_online,
    embed_target,
    ema_update,
    encode,
    init_network_pair,
)


def test_init_is_seeded(tiny_spec):
    """Same seed, same weights; a different seed changes them."""
    a = init_network_pair(tiny_spec, seed=1)
    b = init_network_pair(tiny_spec, seed=1)
    c = init_network_pair(tiny_spec, seed=2)
    for p, q, r in zip(a.all_parameters(), b.all_parameters(), c.all_parameters()):
        np.testing.assert_array_equal(p.data, q.data)
    assert any(not np.array_equal(p.data, r.data) for p, r in zip(a.all_parameters(), c.all_parameters()))


def test_target_starts_as_frozen_copy(tiny_net):
    """Target weights equal online weights and never require gradients."""
    online = list(tiny_net.online_parameters().values())
    target = list(tiny_net.target_parameters().values())
    assert [p.name.replace("online", "target") for p in online] == [p.name for p in target]
    for o, t in zip(online, target):
        np.testing.assert_array_equal(o.data, t.data)
        assert o.requires_grad and not t.requires_grad


def test_embeddings_are_unit_norm(tiny_net, rng):
    """Projected embeddings lie on the unit sphere."""
    views = rng.uniform(size=(5, 6))
    z = embed_online(tiny_net, views)
    np.testing.assert_allclose(np.linalg.norm(z.data, axis=1), 1.0, atol=1e-12)
    single = embed_target(tiny_net, views[0])
    assert single.shape == (3,)


def test_view_width_mismatch(tiny_net):
    """A view of the wrong width is a dimension error."""
    with pytest.raises(DimensionError):
        embed_online(tiny_net, np.zeros((2, 7)))


def test_target_receives_no_gradient(tiny_net, rng):
    """Backward through both branches touches only online parameters."""
    views = rng.uniform(size=(3, 6))
    loss = T.sum(T.mul(embed_online(tiny_net, views), embed_target(tiny_net, views)))
    backward(loss)
    assert all(p.grad is not None for p in tiny_net.online_parameters().values())
    assert all(p.grad is None for p in tiny_net.target_parameters().values())


def test_encode_returns_encoder_output(tiny_net, rng):
    """encode yields the raw encoder output, not the projection."""
    views = rng.uniform(size=(4, 6))
    out = encode(tiny_net, views, batch_size=3)
    assert out.shape == (4, 4)
    np.testing.assert_allclose(out, tiny_net.online_encoder(T.as_tensor(views)).data)


@pytest.mark.parametrize("gamma", [0.0, 0.5, 0.99, 1.0])
def test_ema_matches_closed_form(tiny_spec, gamma):
    """k updates with frozen online weights give gamma^k * xi0 + (1 - gamma^k) * theta."""
    net = init_network_pair(tiny_spec, seed=4)
    rng = np.random.default_rng(0)
    for p in net.online_parameters().values():
        p.data = rng.normal(size=p.shape)
    xi0 = [p.data.copy() for p in net.target_parameters().values()]
    k = 7
    for _ in range(k):
        ema_update(net, gamma)
    for t, x0, o in zip(net.target_parameters().values(), xi0, net.online_parameters().values()):
        expected = gamma**k * x0 + (1 - gamma**k) * o.data
        np.testing.assert_allclose(t.data, expected, rtol=0, atol=1e-10)


def test_ema_extremes_are_exact(tiny_net, rng):
    """gamma=1 freezes the target bitwise; gamma=0 copies the online weights."""
    for p in tiny_net.online_parameters().values():
        p.data = p.data + rng.normal(size=p.shape)
    before = [p.data.copy() for p in tiny_net.target_parameters().values()]
    ema_update(tiny_net, 1.0)
    for t, b in zip(tiny_net.target_parameters().values(), before):
        np.testing.assert_array_equal(t.data, b)
    ema_update(tiny_net, 0.0)
    for t, o in zip(tiny_net.target_parameters().values(), tiny_net.online_parameters().values()):
        np.testing.assert_array_equal(t.data, o.data)


def test_ema_rejects_gamma_out_of_range(tiny_net):
    with pytest.raises(ConfigurationError):
        ema_update(tiny_net, 1.5)
