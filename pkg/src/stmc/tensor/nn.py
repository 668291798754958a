"""Parameter-holding layers built on the primitives in :mod:`stmc.tensor.ops`."""
from __future__ import annotations

from typing import Iterator

import numpy as np

from . import ops
from .core import ShapeError, Tensor


def _uniform(rng: np.random.Generator, shape, bound: float) -> Tensor:
    return Tensor(rng.uniform(-bound, bound, size=shape).astype(np.float32), requires_grad=True)


def _zeros(shape) -> Tensor:
    return Tensor(np.zeros(shape, dtype=np.float32), requires_grad=True)


class Module:
    """Walks attributes (and lists of modules) to find parameters by dotted path."""

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, value in vars(self).items():
            path = f"{prefix}{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield path, value
            elif isinstance(value, Module):
                yield from value.named_parameters(path + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{path}.{i}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def astype(self, dtype) -> "Module":
        """Cast every parameter in place (float64 for gradient checking)."""
        for p in self.parameters():
            p.data = p.data.astype(dtype)
            p.grad = None
        return self

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.parameters()))


class Conv2d(Module):
    def __init__(self, cin: int, cout: int, k: int, rng: np.random.Generator, stride: int = 1, padding: int | None = None):
        self.stride = stride
        self.padding = (k - 1) // 2 if padding is None else padding
        self.weight = _uniform(rng, (cout, cin, k, k), np.sqrt(6.0 / (cin * k * k)))
        self.bias = _zeros((cout,))

    def __call__(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.weight, self.bias, self.stride, self.padding)


class ConvTranspose2d(Module):
    """Stride-2 transposed convolution that exactly doubles spatial extent."""

    def __init__(self, cin: int, cout: int, rng: np.random.Generator, k: int = 4, stride: int = 2,
                 padding: int = 1, output_padding: int = 0):
        # (H-1)s - 2p + k + op == 2H for every H  <=>  s == 2 and k + op - 2p == 2
        if stride != 2 or k + output_padding - 2 * padding != 2:
            raise ShapeError(
                f"transposed conv (k={k}, stride={stride}, padding={padding}, output_padding={output_padding}) "
                "does not double the spatial extent")
        self.stride, self.padding, self.output_padding = stride, padding, output_padding
        self.weight = _uniform(rng, (cin, cout, k, k), np.sqrt(6.0 / (cin * k * k / 4)))
        self.bias = _zeros((cout,))

    def __call__(self, x: Tensor) -> Tensor:
        return ops.conv_transpose2d(x, self.weight, self.bias, self.stride, self.padding, self.output_padding)


class Dense(Module):
    def __init__(self, cin: int, cout: int, rng: np.random.Generator, gain: float = 6.0):
        self.weight = _uniform(rng, (cout, cin), np.sqrt(gain / cin))
        self.bias = _zeros((cout,))

    def __call__(self, x: Tensor) -> Tensor:
        return ops.dense(x, self.weight, self.bias)


class TemporalConv1d(Module):
    def __init__(self, cin: int, cout: int, k: int, rng: np.random.Generator):
        if k % 2 == 0:
            raise ShapeError(f"temporal kernel size must be odd, got {k}")
        self.weight = _uniform(rng, (cout, cin, k), np.sqrt(6.0 / (cin * k)))
        self.bias = _zeros((cout,))

    def __call__(self, x: Tensor) -> Tensor:
        return ops.temporal_conv1d(x, self.weight, self.bias)
