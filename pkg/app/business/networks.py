"""Online/target network pair with EMA synchronization."""

from dataclasses import dataclass
from typing import Dict, List, Tuple, Union

import numpy as np
import structlog

from app.core import tensor as T
from app.core.exceptions import ConfigurationError, DimensionError
from app.core.tensor import Tensor, no_grad
from app.models.config import MlpSpec, NetworkSpec
from app.utils.rng import Stream, stream

logger = structlog.get_logger()


class Mlp:
    """ReLU MLP over row-batched inputs; the last layer is linear."""

    def __init__(self, spec: MlpSpec, prefix: str, layers: List[Tuple[Tensor, Tensor]]):
        self.spec = spec
        self.prefix = prefix
        self.layers = layers

    @classmethod
    def initialize(cls, spec: MlpSpec, prefix: str, rng: np.random.Generator) -> "Mlp":
        """Fan-in scaled uniform weights and biases."""
        layers = []
        for i, (fan_in, fan_out) in enumerate(zip(spec.widths[:-1], spec.widths[1:])):
            bound = 1.0 / np.sqrt(fan_in)
            weight = Tensor(rng.uniform(-bound, bound, size=(fan_in, fan_out)), requires_grad=True, name=f"{prefix}.{i}.weight")
            bias = Tensor(rng.uniform(-bound, bound, size=(fan_out,)), requires_grad=True, name=f"{prefix}.{i}.bias")
            layers.append((weight, bias))
        return cls(spec, prefix, layers)

    def frozen_copy(self, prefix: str) -> "Mlp":
        """Exact copy whose tensors never receive gradients."""
        layers = [
            (
                Tensor(w.data.copy(), requires_grad=False, name=w.name.replace(self.prefix, prefix, 1)),
                Tensor(b.data.copy(), requires_grad=False, name=b.name.replace(self.prefix, prefix, 1)),
            )
            for w, b in self.layers
        ]
        return Mlp(self.spec, prefix, layers)

    def parameters(self) -> List[Tensor]:
        return [p for layer in self.layers for p in layer]

    def __call__(self, x: Tensor) -> Tensor:
        last = len(self.layers) - 1
        for i, (weight, bias) in enumerate(self.layers):
            x = T.add(T.matmul(x, weight), bias)
            if i < last:
                x = T.relu(x)
        return x


@dataclass
class NetworkPair:
    """Online f, h and target g, q with the EMA coefficient gamma."""

    spec: NetworkSpec
    online_encoder: Mlp
    online_projector: Mlp
    target_encoder: Mlp
    target_projector: Mlp

    @property
    def gamma(self) -> float:
        return self.spec.gamma

    def online_parameters(self) -> Dict[str, Tensor]:
        params = self.online_encoder.parameters() + self.online_projector.parameters()
        return {p.name: p for p in params}

    def target_parameters(self) -> Dict[str, Tensor]:
        params = self.target_encoder.parameters() + self.target_projector.parameters()
        return {p.name: p for p in params}

    def all_parameters(self) -> List[Tensor]:
        """Declaration order: online f, online h, target g, target q."""
        return (
            self.online_encoder.parameters()
            + self.online_projector.parameters()
            + self.target_encoder.parameters()
            + self.target_projector.parameters()
        )

    def zero_grad(self) -> None:
        for p in self.all_parameters():
            p.zero_grad()


def init_network_pair(spec: NetworkSpec, seed: int) -> NetworkPair:
    """Random online weights; the target starts as an exact copy."""
    rng = stream(seed, Stream.INIT)
    online_encoder = Mlp.initialize(spec.encoder, "online.encoder", rng)
    online_projector = Mlp.initialize(spec.projector, "online.projector", rng)
    return NetworkPair(
        spec=spec,
        online_encoder=online_encoder,
        online_projector=online_projector,
        target_encoder=online_encoder.frozen_copy("target.encoder"),
        target_projector=online_projector.frozen_copy("target.projector"),
    )


def _as_rows(net: NetworkPair, views: Union[Tensor, np.ndarray]) -> Tuple[Tensor, bool]:
    views = T.as_tensor(views)
    single = views.ndim == 1
    if single:
        views = T.reshape(views, (1, views.shape[0]))
    expected = net.spec.encoder.input_width
    if views.ndim != 2 or views.shape[1] != expected:
        raise DimensionError(
            f"view width {views.shape} does not match encoder input ({expected},)",
            error_code="view_width",
        )
    return views, single


def _embed(net: NetworkPair, encoder: Mlp, projector: Mlp, views) -> Tensor:
    rows, single = _as_rows(net, views)
    z = projector(encoder(rows))
    if net.spec.normalize_embeddings:
        z = T.l2_normalize(z, axis=-1)
    return T.reshape(z, (z.shape[1],)) if single else z


def embed_online(net: NetworkPair, views) -> Tensor:
    """h(f(x)), L2-normalized, recorded for gradients."""
    return _embed(net, net.online_encoder, net.online_projector, views)


def embed_target(net: NetworkPair, views) -> Tensor:
    """q(g(x)), L2-normalized and detached."""
    with no_grad():
        out = _embed(net, net.target_encoder, net.target_projector, views)
    return T.stop_gradient(out)


def encode(net: NetworkPair, views: np.ndarray, batch_size: int = 1024) -> np.ndarray:
    """Raw online encoder output f(x), used as the representation by probes."""
    views = np.asarray(views, dtype=np.float64)
    outputs = []
    with no_grad():
        for start in range(0, len(views), batch_size):
            rows, _ = _as_rows(net, views[start : start + batch_size])
            outputs.append(net.online_encoder(rows).data)
    if not outputs:
        return np.zeros((0, net.spec.encoder.output_width))
    return np.concatenate(outputs, axis=0)


def ema_update(net: NetworkPair, gamma: float = None) -> None:
    """target <- gamma * target + (1 - gamma) * online, elementwise."""
    gamma = net.gamma if gamma is None else gamma
    if not 0.0 <= gamma <= 1.0:
        raise ConfigurationError(f"gamma must lie in [0, 1], got {gamma}", error_code="gamma")
    online = net.online_encoder.parameters() + net.online_projector.parameters()
    target = net.target_encoder.parameters() + net.target_projector.parameters()
    for t, o in zip(target, online):
        t.data = gamma * t.data + (1.0 - gamma) * o.data
