# kdda/nets/network.py
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from aws_lambda_powertools import Logger

from kdda.nets.models import (
    DenseLayer,
    LayerParams,
    NetworkSpec,
    NetworkState,
    RegressorState,
    SpecError,
)
from kdda.tensor_ad import DiffTensor, ShapeMismatchError, add, expand, matmul, no_grad, relu

logger = Logger(service="kdda", child=True)


def build_mlp_spec(in_dim: int, hidden_dims: Sequence[int], class_count: int,
                   tap_layers: Optional[Sequence[int]] = None) -> NetworkSpec:
    """
    Dense relu network in_dim -> hidden... -> class_count. The default tap is
    the last hidden layer, i.e. the output of the feature extractor.
    """
    dims = [in_dim, *hidden_dims, class_count]
    layers = tuple(
        DenseLayer(dims[i], dims[i + 1], "relu" if i < len(dims) - 2 else "none")
        for i in range(len(dims) - 1)
    )
    if tap_layers is None:
        tap_layers = (len(hidden_dims) - 1,) if hidden_dims else ()
    return NetworkSpec(layers, tuple(tap_layers), class_count)


def _he_normal(rng: np.random.Generator, in_dim: int, out_dim: int) -> np.ndarray:
    # He scaling: every hidden activation is relu.
    return rng.normal(0.0, np.sqrt(2.0 / in_dim), size=(in_dim, out_dim))


def init_network(spec: NetworkSpec, seed: int) -> NetworkState:
    """Seeded He-normal weights and zero biases; same (spec, seed) gives identical bytes."""
    rng = np.random.default_rng(seed)
    params = {}
    for i, layer in enumerate(spec.layers):
        params[i] = LayerParams(
            DiffTensor(_he_normal(rng, layer.in_dim, layer.out_dim), requires_grad=True),
            DiffTensor(np.zeros(layer.out_dim), requires_grad=True),
        )
    return NetworkState(params, seed)


def forward(state: NetworkState, spec: NetworkSpec, batch) -> tuple[DiffTensor, dict[int, DiffTensor]]:
    """
    Evaluates the network on an N x d batch.

    Returns the logits and a map tap index -> pre-activation features.
    """
    if not isinstance(batch, DiffTensor):
        batch = DiffTensor(batch)
    if not spec.layers:
        raise SpecError("cannot evaluate a network without layers")
    if batch.data.ndim != 2 or batch.shape[1] != spec.input_dim:
        raise ShapeMismatchError(
            f"forward: batch shape {batch.shape} does not match input width {spec.input_dim}"
        )

    n = batch.shape[0]
    h = batch
    features = {}
    for i, layer in enumerate(spec.layers):
        p = state.params[i]
        z = add(matmul(h, p.weight), expand(p.bias, (n, layer.out_dim)))
        if i in spec.tap_layers:
            features[i] = z
        h = relu(z) if layer.activation == "relu" else z
    return h, features


@dataclass
class Network:
    """A network description bound to its parameter values."""
    spec: NetworkSpec
    state: NetworkState
    name: str = "network"

    @classmethod
    def create(cls, spec: NetworkSpec, seed: int, name: str = "network") -> "Network":
        return cls(spec, init_network(spec, seed), name)

    def forward(self, batch) -> tuple[DiffTensor, dict[int, DiffTensor]]:
        return forward(self.state, self.spec, batch)

    def logits(self, batch) -> DiffTensor:
        return self.forward(batch)[0]

    def predict(self, features: np.ndarray) -> np.ndarray:
        with no_grad():
            logits, _ = self.forward(DiffTensor(features))
        return np.argmax(logits.data, axis=1)

    def parameters(self) -> list[DiffTensor]:
        return self.state.parameters()

    def param_count(self) -> int:
        return self.spec.param_count()

    def copy(self, name: Optional[str] = None) -> "Network":
        return Network(self.spec, self.state.copy(), name or self.name)


def init_regressor(in_dim: int, out_dim: int, seed: int) -> RegressorState:
    rng = np.random.default_rng(seed)
    return RegressorState(
        DiffTensor(_he_normal(rng, in_dim, out_dim), requires_grad=True),
        DiffTensor(np.zeros(out_dim), requires_grad=True),
    )


def apply_regressor(regressor: RegressorState, features: DiffTensor) -> DiffTensor:
    if features.data.ndim != 2 or features.shape[1] != regressor.in_dim:
        raise ShapeMismatchError(
            f"regressor: features shape {features.shape} does not match input width {regressor.in_dim}"
        )
    n = features.shape[0]
    return add(matmul(features, regressor.weight), expand(regressor.bias, (n, regressor.out_dim)))
