# kdda/nets/models.py
"""
Plain-dataclass models describing networks and their parameters.
"""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from kdda.tensor_ad import DiffTensor

ACTIVATIONS = ("relu", "none")


class SpecError(ValueError):
    """A network description violates its structural invariants."""
    pass


@dataclass(frozen=True)
class DenseLayer:
    in_dim: int
    out_dim: int
    activation: str = "relu"

    def describe(self) -> str:
        return f"dense({self.in_dim}->{self.out_dim}, {self.activation})"


@dataclass(frozen=True)
class NetworkSpec:
    """
    Ordered dense layers plus the indices whose pre-activation output is
    exposed as a feature map. The last layer produces raw logits.
    """
    layers: tuple[DenseLayer, ...]
    tap_layers: tuple[int, ...]
    class_count: int

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "tap_layers", tuple(sorted(set(self.tap_layers))))
        self.validate()

    def validate(self) -> None:
        if self.class_count < 1:
            raise SpecError(f"class_count must be positive, got {self.class_count}")
        for i, layer in enumerate(self.layers):
            if layer.in_dim < 1 or layer.out_dim < 1:
                raise SpecError(f"layer {i}: dimensions must be positive, got {layer.describe()}")
            if layer.activation not in ACTIVATIONS:
                raise SpecError(f"layer {i}: unknown activation '{layer.activation}'")
            if i > 0 and self.layers[i - 1].out_dim != layer.in_dim:
                raise SpecError(
                    f"layer {i}: in_dim {layer.in_dim} does not chain with previous out_dim {self.layers[i - 1].out_dim}"
                )
        for tap in self.tap_layers:
            if not 0 <= tap < len(self.layers):
                raise SpecError(f"tap layer {tap} is out of range for {len(self.layers)} layers")
        # An empty network is a valid (degenerate) checkpointable object.
        if self.layers:
            head = self.layers[-1]
            if head.out_dim != self.class_count or head.activation != "none":
                raise SpecError(
                    f"final layer must be dense(->{self.class_count}, none), got {head.describe()}"
                )

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim if self.layers else 0

    def tap_dim(self, tap: int) -> int:
        return self.layers[tap].out_dim

    def param_count(self) -> int:
        return sum(layer.in_dim * layer.out_dim + layer.out_dim for layer in self.layers)

    def to_dict(self) -> dict:
        return {
            "layers": [[l.in_dim, l.out_dim, l.activation] for l in self.layers],
            "tap_layers": list(self.tap_layers),
            "class_count": self.class_count,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "NetworkSpec":
        try:
            layers = tuple(DenseLayer(int(a), int(b), str(c)) for a, b, c in data["layers"])
            return cls(layers, tuple(int(t) for t in data["tap_layers"]), int(data["class_count"]))
        except (KeyError, TypeError, ValueError) as e:
            if isinstance(e, SpecError):
                raise
            raise SpecError(f"malformed network description: {e}") from e


@dataclass(frozen=True)
class DomainClassifierSpec:
    """Small dense head separating source (0) from target (1) features."""
    input_dim: int
    hidden_dims: tuple[int, ...] = (64, 64)

    def to_network_spec(self) -> NetworkSpec:
        dims = [self.input_dim, *self.hidden_dims, 2]
        layers = [
            DenseLayer(dims[i], dims[i + 1], "relu" if i < len(dims) - 2 else "none")
            for i in range(len(dims) - 1)
        ]
        return NetworkSpec(tuple(layers), (), 2)


@dataclass
class LayerParams:
    weight: DiffTensor
    bias: DiffTensor


@dataclass
class NetworkState:
    params: dict[int, LayerParams] = field(default_factory=dict)
    init_seed: Optional[int] = None

    def parameters(self) -> list[DiffTensor]:
        """All parameters in layer order, weight before bias."""
        out = []
        for index in sorted(self.params):
            out.extend((self.params[index].weight, self.params[index].bias))
        return out

    def copy(self) -> "NetworkState":
        return NetworkState(
            {
                i: LayerParams(
                    DiffTensor(p.weight.data.copy(), requires_grad=p.weight.requires_grad),
                    DiffTensor(p.bias.data.copy(), requires_grad=p.bias.requires_grad),
                )
                for i, p in self.params.items()
            },
            self.init_seed,
        )

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(t.data)) for t in self.parameters())


@dataclass
class RegressorState:
    """Linear map from a student tap width to a teacher tap width."""
    weight: DiffTensor
    bias: DiffTensor

    @property
    def in_dim(self) -> int:
        return self.weight.shape[0]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[1]

    def parameters(self) -> list[DiffTensor]:
        return [self.weight, self.bias]
