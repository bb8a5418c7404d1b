# kdda/trainers/optimizer.py
from typing import Optional, Sequence

import numpy as np

from kdda.tensor_ad import DiffTensor
from kdda.trainers.models import SgdConfig


def sgd_step(params: Sequence[np.ndarray], grads: Sequence[Optional[np.ndarray]], cfg: SgdConfig,
             velocity: dict[int, np.ndarray]) -> list[np.ndarray]:
    """
    One momentum SGD update with coupled weight decay:
        v <- momentum * v + (grad + weight_decay * w)
        w <- w - lr * v
    `velocity` is keyed by parameter position and updated in place. Parameters
    whose gradient is None did not take part in the objective and are returned
    unchanged.
    """
    updated = []
    for i, (w, g) in enumerate(zip(params, grads)):
        if g is None:
            updated.append(w)
            continue
        v = velocity.get(i)
        step = g + cfg.weight_decay * w
        v = step if v is None else cfg.momentum * v + step
        velocity[i] = v
        updated.append(w - cfg.learning_rate * v)
    return updated


class SGD:
    """Momentum SGD over a fixed list of DiffTensor parameters."""
    def __init__(self, params: Sequence[DiffTensor], cfg: SgdConfig):
        self.params = list(params)
        self.cfg = cfg
        self.velocity: dict[int, np.ndarray] = {}

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        new_values = sgd_step([p.data for p in self.params], [p.grad for p in self.params],
                              self.cfg, self.velocity)
        # Rebind rather than mutate: recorded backward closures keep the old values.
        for p, value in zip(self.params, new_values):
            p.data = value
