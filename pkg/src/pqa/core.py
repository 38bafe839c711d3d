"""Domain types shared by every other module: layer geometry, unrolled
matrix shapes, PQ parameterization, and subspace partitioning.

All types are immutable after construction and all operations are pure,
so they can be used freely from concurrent code.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum


class ShapeError(ValueError):
    """Tensor or layer geometry is inconsistent."""


class NumericError(ArithmeticError):
    """A numeric procedure failed (singular system, divergence, ...)."""


class LayerKind(str, Enum):
    CONV = "conv"
    POINTWISE = "pointwise"
    DEPTHWISE = "depthwise"
    LINEAR = "linear"


class Metric(str, Enum):
    L2_SQUARED = "l2_squared"
    L1 = "l1"


@dataclass(frozen=True)
class LayerSpec:
    """Geometry of one network layer plus whether PQ replaces its matmul.

    ``in_h``/``in_w`` are the spatial dims of the layer input; linear
    layers use 1 for both and a 1x1 kernel.
    """

    name: str
    kind: LayerKind
    c_in: int
    c_out: int
    k_h: int = 1
    k_w: int = 1
    stride: int = 1
    groups: int = 1
    in_h: int = 1
    in_w: int = 1
    pq_enabled: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", LayerKind(self.kind))
        counts = (self.c_in, self.c_out, self.k_h, self.k_w,
                  self.stride, self.groups, self.in_h, self.in_w)
        if any(int(v) != v or v < 1 for v in counts):
            raise ShapeError(f"layer {self.name!r}: all counts must be >= 1")
        if self.c_in % self.groups or self.c_out % self.groups:
            raise ShapeError(
                f"layer {self.name!r}: c_in={self.c_in}, c_out={self.c_out} "
                f"not divisible by groups={self.groups}")
        if self.kind is LayerKind.DEPTHWISE and not (
                self.groups == self.c_in == self.c_out):
            raise ShapeError(
                f"layer {self.name!r}: depthwise requires groups == c_in == c_out")
        if self.kind is LayerKind.POINTWISE and (self.k_h != 1 or self.k_w != 1):
            raise ShapeError(f"layer {self.name!r}: pointwise requires a 1x1 kernel")
        if self.kind is LayerKind.LINEAR and (self.k_h != 1 or self.k_w != 1):
            raise ShapeError(f"layer {self.name!r}: linear layers have no kernel")


@dataclass(frozen=True)
class UnrolledDims:
    """Shape of the unrolled (im2col) input/weight matrices.

    ``a`` is the unrolled row length k_h*k_w*c_in/groups; ``cols`` the
    number of output spatial positions. Linear layers have a == c_in and
    cols == 1 per sample.
    """

    a: int
    cols: int
    c_out: int

    def __post_init__(self) -> None:
        if self.a < 1 or self.cols < 1 or self.c_out < 1:
            raise ShapeError("unrolled dims must all be >= 1")


@dataclass(frozen=True)
class PQConfig:
    """PQ parameterization for one layer: prototype count, prototype
    length, distance metric, and softmax temperature."""

    n_p: int
    l_s: int
    metric: Metric = Metric.L2_SQUARED
    tau: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "metric", Metric(self.metric))
        if self.n_p < 1 or self.l_s < 1:
            raise ValueError("n_p and l_s must be >= 1")
        if not self.tau > 0:
            raise ValueError("tau must be > 0")


@dataclass(frozen=True)
class SubspaceLayout:
    """Partition of the unrolled rows into n_s subspaces of width l_s.

    When l_s does not divide the row count, the tail of the last subspace
    is zero-padded; padded positions contribute zero to both inputs and
    weights, so they never change a dot product.
    """

    n_s: int
    pad: int

    def __post_init__(self) -> None:
        if self.n_s < 1 or self.pad < 0:
            raise ShapeError("invalid subspace layout")


def out_hw(layer: LayerSpec) -> tuple[int, int]:
    """Output spatial size under same-padding: (ceil(H/s), ceil(W/s))."""
    if layer.kind is LayerKind.LINEAR:
        return 1, 1
    s = layer.stride
    return -(-layer.in_h // s), -(-layer.in_w // s)


def derive_unrolled_dims(layer: LayerSpec) -> UnrolledDims:
    """Unrolled matrix shape for a layer: rows A = k_h*k_w*c_in/groups and
    one column per output spatial position (same-padding convention)."""
    if layer.kind is LayerKind.LINEAR:
        return UnrolledDims(a=layer.c_in, cols=1, c_out=layer.c_out)
    a = layer.k_h * layer.k_w * layer.c_in // layer.groups
    oh, ow = out_hw(layer)
    return UnrolledDims(a=a, cols=oh * ow, c_out=layer.c_out)


def subspace_layout(a: int, l_s: int) -> SubspaceLayout:
    """Split ``a`` unrolled rows into ceil(a/l_s) subspaces, zero-padding
    the tail of the last one."""
    if a < 1 or l_s < 1:
        raise ValueError("a and l_s must be >= 1")
    n_s = math.ceil(a / l_s)
    return SubspaceLayout(n_s=n_s, pad=n_s * l_s - a)
