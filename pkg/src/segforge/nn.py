"""Minimal module system: parameter registration, naming, train/eval state."""

from __future__ import annotations

import numpy as np

from . import ops
from .errors import ShapeError
from .tensor import Parameter, Tensor, get_default_dtype


_SHAPE_PROBE = False


class Module:
    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_buffers", {})
        object.__setattr__(self, "_children", {})
        object.__setattr__(self, "training", True)
        object.__setattr__(self, "_probe_shape", None)

    def __setattr__(self, name, value):
        if isinstance(value, Parameter):
            self._params[name] = value
        elif isinstance(value, Module):
            self._children[name] = value
        object.__setattr__(self, name, value)

    def register_buffer(self, name: str, tensor: Tensor) -> None:
        self._buffers[name] = tensor
        object.__setattr__(self, name, tensor)

    def named_parameters(self, prefix: str = ""):
        for name, p in self._params.items():
            yield (prefix + name, p)
        for name, child in self._children.items():
            yield from child.named_parameters(prefix + name + ".")

    def parameters(self):
        for _, p in self.named_parameters():
            yield p

    def named_buffers(self, prefix: str = ""):
        for name, b in self._buffers.items():
            yield (prefix + name, b)
        for name, child in self._children.items():
            yield from child.named_buffers(prefix + name + ".")

    def modules(self):
        yield self
        for child in self._children.values():
            yield from child.modules()

    def train(self, mode: bool = True):
        for m in self.modules():
            object.__setattr__(m, "training", mode)
        return self

    def eval(self):
        return self.train(False)

    def bind_rng(self, rng: np.random.Generator) -> None:
        """Point every dropout layer at one shared generator."""
        for m in self.modules():
            if isinstance(m, Dropout):
                m.rng = rng

    def finalize_names(self) -> None:
        for name, p in self.named_parameters():
            p.name = name

    def named_modules(self, prefix: str = ""):
        yield (prefix.rstrip("."), self)
        for name, child in self._children.items():
            yield from child.named_modules(prefix + name + ".")

    def __call__(self, *args, **kwargs):
        out = self.forward(*args, **kwargs)
        if _SHAPE_PROBE and isinstance(out, Tensor):
            object.__setattr__(self, "_probe_shape", tuple(out.shape))
        return out

    def forward(self, *args, **kwargs):
        raise NotImplementedError


def collect_probe_shapes(module: Module, run) -> dict:
    """Run `run()` with output-shape recording on; returns {path: shape}."""
    global _SHAPE_PROBE
    _SHAPE_PROBE = True
    try:
        run()
    finally:
        _SHAPE_PROBE = False
    shapes = {}
    for path, m in module.named_modules():
        if m._probe_shape is not None:
            shapes[path or "<root>"] = list(m._probe_shape)
            object.__setattr__(m, "_probe_shape", None)
    return shapes


class ModuleList(Module):
    def __init__(self, modules=()):
        super().__init__()
        self._items = []
        for m in modules:
            self.append(m)

    def append(self, module: Module) -> None:
        self._children[str(len(self._items))] = module
        self._items.append(module)

    def __iter__(self):
        return iter(self._items)

    def __len__(self):
        return len(self._items)

    def __getitem__(self, i):
        return self._items[i]


def he_normal(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    std = np.sqrt(2.0 / fan_in)
    return (rng.standard_normal(shape) * std).astype(get_default_dtype())


class Conv2d(Module):
    def __init__(self, in_channels, out_channels, kernel_size, rng,
                 stride=1, padding=0, dilation=1, groups=1, bias=False):
        super().__init__()
        if in_channels % groups != 0 or out_channels % groups != 0:
            raise ShapeError(
                f"conv channels ({in_channels}->{out_channels}) not divisible by groups={groups}"
            )
        self.stride = stride
        self.padding = padding
        self.dilation = dilation
        self.groups = groups
        fan_in = (in_channels // groups) * kernel_size * kernel_size
        self.weight = Parameter(
            he_normal(rng, (out_channels, in_channels // groups, kernel_size, kernel_size), fan_in)
        )
        if bias:
            self.bias = Parameter(np.zeros(out_channels, dtype=get_default_dtype()))
        else:
            self.bias = None

    def forward(self, x: Tensor) -> Tensor:
        return ops.conv2d(
            x, self.weight, self.bias,
            stride=self.stride, padding=self.padding,
            dilation=self.dilation, groups=self.groups,
        )


class BatchNorm2d(Module):
    def __init__(self, channels, momentum=0.1, epsilon=1e-5):
        super().__init__()
        self.momentum = momentum
        self.epsilon = epsilon
        dt = get_default_dtype()
        self.gamma = Parameter(np.ones(channels, dtype=dt))
        self.beta = Parameter(np.zeros(channels, dtype=dt))
        self.register_buffer("running_mean", Tensor(np.zeros(channels, dtype=dt)))
        self.register_buffer("running_var", Tensor(np.ones(channels, dtype=dt)))

    def forward(self, x: Tensor) -> Tensor:
        return ops.batch_norm2d(
            x, self.gamma, self.beta, self.running_mean, self.running_var,
            training=self.training, momentum=self.momentum, epsilon=self.epsilon,
        )


class ReLU(Module):
    def forward(self, x: Tensor) -> Tensor:
        return ops.relu(x)


class MaxPool2d(Module):
    def __init__(self, kernel_size, stride, padding=0):
        super().__init__()
        self.kernel_size = kernel_size
        self.stride = stride
        self.padding = padding

    def forward(self, x: Tensor) -> Tensor:
        return ops.max_pool2d(x, self.kernel_size, self.stride, self.padding)


class Dropout(Module):
    def __init__(self, rate: float, rng: np.random.Generator):
        super().__init__()
        self.rate = rate
        self.rng = rng

    def forward(self, x: Tensor) -> Tensor:
        return ops.dropout(x, self.rate, self.training, self.rng)


class Sequential(Module):
    def __init__(self, *modules):
        super().__init__()
        self._order = []
        for i, m in enumerate(modules):
            self._children[str(i)] = m
            self._order.append(m)

    def forward(self, x: Tensor) -> Tensor:
        for m in self._order:
            x = m(x)
        return x
