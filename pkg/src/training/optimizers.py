from dataclasses import dataclass, field
from typing import Dict

import numpy as np

from src.errors import ShapeMismatchError
from src.training.config import TrainConfig

Params = Dict[str, np.ndarray]


class SGD:
    def step(self, params: Params, grads: Params, lr: float) -> Params:
        _check(params, grads)
        return {name: params[name] - lr * grads[name] for name in params}


@dataclass
class Adam:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: Params = field(default_factory=dict)
    v: Params = field(default_factory=dict)

    def step(self, params: Params, grads: Params, lr: float) -> Params:
        _check(params, grads)
        self.t += 1
        updated = {}
        for name, value in params.items():
            g = grads[name]
            self.m[name] = self.beta1 * self.m.get(name, np.zeros_like(value)) + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v.get(name, np.zeros_like(value)) + (1.0 - self.beta2) * g * g
            m_hat = self.m[name] / (1.0 - self.beta1**self.t)
            v_hat = self.v[name] / (1.0 - self.beta2**self.t)
            updated[name] = value - lr * m_hat / (np.sqrt(v_hat) + self.eps)
        return updated


def _check(params: Params, grads: Params) -> None:
    if set(params) != set(grads):
        raise ShapeMismatchError(f"gradients missing for {sorted(set(params) ^ set(grads))}")


def make_optimizer(config: TrainConfig):
    if config.optimizer == "sgd":
        return SGD()
    return Adam(beta1=config.beta1, beta2=config.beta2, eps=config.adam_eps)
