"""Parameterized layers wrapping the functional kernels."""

from __future__ import annotations

import math

import numpy as np

from . import kernels as K
from .tensor import DEFAULT_DTYPE, Tensor, channel_slice, sigmoid


class Layer:
    """Minimal parameter container. Subclasses register Tensors in ``_params``
    and child layers in ``_children``."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._children: dict[str, "Layer"] = {}

    def named_parameters(self, prefix: str = ""):
        """Yield (name, tensor), visiting every distinct tensor once."""
        seen: set[int] = set()
        yield from self._walk(prefix, seen)

    def _walk(self, prefix, seen):
        for name, p in self._params.items():
            if id(p) not in seen:
                seen.add(id(p))
                yield prefix + name, p
        for cname, child in self._children.items():
            yield from child._walk(f"{prefix}{cname}.", seen)


def _he_normal(rng, shape, fan_in, dtype):
    return rng.standard_normal(shape).astype(dtype) * math.sqrt(2.0 / fan_in)


class Conv2d(Layer):
    def __init__(
        self, cin, cout, k=3, stride=1, padding=None, bias=True, rng=None, dtype=DEFAULT_DTYPE, zero_init=False
    ):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.stride = stride
        self.padding = k // 2 if padding is None else padding
        w = _he_normal(rng, (cout, cin, k, k), cin * k * k, dtype)
        self.weight = Tensor(np.zeros_like(w) if zero_init else w, requires_grad=True)
        self._params["weight"] = self.weight
        self.bias = None
        if bias:
            self.bias = Tensor(np.zeros(cout, dtype=dtype), requires_grad=True)
            self._params["bias"] = self.bias

    def __call__(self, x: Tensor) -> Tensor:
        return K.conv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)


class DeformConv2d(Layer):
    """Deformable 3x3 convolution whose offsets and masks come from a plain
    convolution over the same input.

    The offset branch starts at zero weights: offsets 0, masks sigmoid(0) = 0.5.
    """

    def __init__(self, cin, cout, k=3, rng=None, dtype=DEFAULT_DTYPE):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.k = k
        n = k * k
        self.weight = Tensor(_he_normal(rng, (cout, cin, k, k), cin * k * k, dtype), requires_grad=True)
        self.offset_weight = Tensor(np.zeros((3 * n, cin, k, k), dtype=dtype), requires_grad=True)
        self.offset_bias = Tensor(np.zeros(3 * n, dtype=dtype), requires_grad=True)
        self._params.update(
            weight=self.weight, offset_weight=self.offset_weight, offset_bias=self.offset_bias
        )

    def field(self, x: Tensor) -> K.DeformField:
        n = self.k * self.k
        raw = K.conv2d(x, self.offset_weight, self.offset_bias, padding=self.k // 2)
        return K.DeformField(channel_slice(raw, 0, 2 * n), sigmoid(channel_slice(raw, 2 * n, 3 * n)))

    def __call__(self, x: Tensor) -> Tensor:
        return K.deform_conv2d(x, self.weight, self.field(x), padding=self.k // 2)


class CrossDiffConv(Layer):
    """HV-cross central-difference convolution with fixed theta."""

    def __init__(self, cin, cout, theta=0.5, rng=None, dtype=DEFAULT_DTYPE):
        super().__init__()
        if not 0.0 <= theta <= 1.0:
            raise ValueError(f"theta must lie in [0, 1], got {theta}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.theta = theta
        self.weight = Tensor(_he_normal(rng, (cout, cin, 5), cin * 5, dtype), requires_grad=True)
        self._params["weight"] = self.weight

    def __call__(self, x: Tensor) -> Tensor:
        return K.ccdc_hv(x, self.weight, self.theta)
