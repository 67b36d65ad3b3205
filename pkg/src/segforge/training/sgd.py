"""SGD with classical momentum and the polynomial learning-rate decay."""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError, ShapeError


def poly_lr(epoch: int, lr0: float, power: float, total_epochs: int, min_lr: float) -> float:
    """lr0 * (1 - e/T)^power, floored at min_lr."""
    if not 0 <= epoch <= total_epochs:
        raise ConfigError(f"epoch {epoch} outside [0, {total_epochs}]")
    lr = lr0 * (1.0 - epoch / total_epochs) ** power
    return max(lr, min_lr)


class SGD:
    """Heavy-ball momentum with L2 decay folded into the gradient.

    Per step: g <- grad + wd * param; v <- mu * v + g; param <- param - lr * v.
    With decay_conv_only, weight decay skips batch-norm affine parameters and
    biases (anything that is not a 4-D conv kernel). Gradients are cleared
    after the step.
    """

    def __init__(self, named_params, momentum: float = 0.9,
                 weight_decay: float = 1e-4, decay_conv_only: bool = False):
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.params = list(named_params)
        self.velocity = {name: np.zeros_like(p.data) for name, p in self.params}
        if decay_conv_only:
            self._decayed = {name for name, p in self.params if p.data.ndim == 4}
        else:
            self._decayed = {name for name, _ in self.params}

    def step(self, lr: float) -> None:
        for name, p in self.params:
            if p.grad is None:
                raise ShapeError(f"parameter {name!r} has no gradient")
            v = self.velocity.get(name)
            if v is None:
                raise ShapeError(f"parameter {name!r} has no velocity buffer")
            g = p.grad
            if name in self._decayed and self.weight_decay:
                g = g + np.asarray(self.weight_decay, dtype=p.data.dtype) * p.data
            v *= np.asarray(self.momentum, dtype=v.dtype)
            v += g
            p.data -= np.asarray(lr, dtype=p.data.dtype) * v
            p.grad = None

    def zero_grad(self) -> None:
        for _, p in self.params:
            p.grad = None

    def state(self) -> dict:
        return dict(self.velocity)

    def load_state(self, velocities: dict) -> None:
        if set(velocities) != set(self.velocity):
            missing = sorted(set(self.velocity) ^ set(velocities))
            raise ShapeError(f"velocity name set mismatch, first difference: {missing[0]!r}")
        for name, v in velocities.items():
            self.velocity[name] = np.array(v, dtype=self.velocity[name].dtype, copy=True)
