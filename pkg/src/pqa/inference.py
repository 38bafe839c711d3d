"""Forward execution: table-lookup PQ layers, exact dense reference, toy
multi-layer networks, and error metrics between the two.

Accumulation over subspaces is fixed subspace-major ascending so results
are bit-reproducible regardless of chunking or thread count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    LayerKind,
    LayerSpec,
    PQConfig,
    ShapeError,
    SubspaceLayout,
    derive_unrolled_dims,
    out_hw,
    subspace_layout,
)
from .encoder import (
    Corrector,
    LutPQ,
    PrototypeBank,
    apply_corrector,
    distances_to_features,
    encode_hard,
    unroll_im2col,
    unroll_weights,
)


@dataclass(frozen=True)
class PQLayerRuntime:
    """Everything needed to run one PQ layer: bank, LUT, layout, config,
    geometry, and an optional output corrector."""

    bank: PrototypeBank
    lut: LutPQ
    layout: SubspaceLayout
    config: PQConfig
    layer: LayerSpec
    corrector: Corrector | None = None

    def __post_init__(self) -> None:
        if not (self.bank.n_s == self.lut.n_s == self.layout.n_s):
            raise ShapeError("bank/lut/layout disagree on n_s")
        if self.bank.n_p != self.lut.n_p or self.bank.n_p != self.config.n_p:
            raise ShapeError("bank/lut/config disagree on n_p")
        if self.bank.l_s != self.config.l_s:
            raise ShapeError("bank/config disagree on l_s")
        dims = derive_unrolled_dims(self.layer)
        if dims.c_out != self.lut.c_out:
            raise ShapeError("lut c_out does not match the layer")
        if subspace_layout(dims.a, self.config.l_s) != self.layout:
            raise ShapeError("layout does not match the layer geometry")
        if self.corrector is not None:
            if self.corrector.d_in != self.bank.n_s * self.bank.n_p:
                raise ShapeError("corrector input width must be n_s*n_p")
            if self.corrector.c_out != self.lut.c_out:
                raise ShapeError("corrector output width must be c_out")


@dataclass(frozen=True)
class ErrorReport:
    """Encoding and output error metrics; mse values are means over all
    elements."""

    mse_out: float
    max_abs_err: float
    mse_enc: float | None = None

    def __post_init__(self) -> None:
        vals = [self.mse_out, self.max_abs_err]
        if self.mse_enc is not None:
            vals.append(self.mse_enc)
        if any(v < 0 for v in vals):
            raise ValueError("error metrics must be non-negative")


def pq_forward(input_unrolled: np.ndarray, rt: PQLayerRuntime) -> np.ndarray:
    """PQ layer output via LUT lookups: out[o, j] = sum_n lut[o, n, idx[n, j]].

    Subspaces accumulate left to right; with a corrector attached, its
    per-column correction is added to the output.
    """
    need_dists = rt.corrector is not None
    enc = encode_hard(input_unrolled, rt.bank, rt.layout, rt.config.metric,
                      keep_distances=need_dists)
    cols = enc.indices.shape[1]
    out = np.zeros((rt.lut.c_out, cols))
    for n in range(rt.layout.n_s):
        out += rt.lut.values[:, n, enc.indices[n]]
    if rt.corrector is not None:
        feats = distances_to_features(enc.distances)
        out += apply_corrector(rt.corrector, feats).T
    return out


def reference_forward(input_unrolled: np.ndarray,
                      weights_unrolled: np.ndarray) -> np.ndarray:
    """Exact dense product W @ X in float64."""
    x = np.asarray(input_unrolled, dtype=np.float64)
    w = np.asarray(weights_unrolled, dtype=np.float64)
    if x.ndim != 2 or w.ndim != 2 or w.shape[1] != x.shape[0]:
        raise ShapeError(f"cannot multiply {w.shape} by {x.shape}")
    return w @ x


def error_report(y_pq: np.ndarray, y_ref: np.ndarray,
                 x_enc: np.ndarray | None = None,
                 x: np.ndarray | None = None) -> ErrorReport:
    """Elementwise divergence of a PQ output from the exact output, plus
    the encoding MSE when the encoded input is supplied."""
    y_pq = np.asarray(y_pq, dtype=np.float64)
    y_ref = np.asarray(y_ref, dtype=np.float64)
    if y_pq.shape != y_ref.shape:
        raise ShapeError(f"output shapes differ: {y_pq.shape} vs {y_ref.shape}")
    diff = y_pq - y_ref
    mse_enc = None
    if x_enc is not None:
        if x is None or np.shape(x_enc) != np.shape(x):
            raise ShapeError("x_enc and x must both be given with equal shapes")
        mse_enc = float(np.mean((np.asarray(x_enc) - np.asarray(x)) ** 2))
    return ErrorReport(mse_out=float(np.mean(diff ** 2)),
                       max_abs_err=float(np.max(np.abs(diff))) if diff.size else 0.0,
                       mse_enc=mse_enc)


# ---------------------------------------------------------------------------
# Multi-layer execution
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NetworkLayer:
    """One executable layer: dense weights, or a PQ runtime, or both
    (the weights then serve as the exact reference)."""

    spec: LayerSpec
    weights: np.ndarray | None = None
    runtime: PQLayerRuntime | None = None
    activation: str = "none"  # "relu" | "none"

    def __post_init__(self) -> None:
        if self.activation not in ("relu", "none"):
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.weights is None and self.runtime is None:
            raise ShapeError(f"layer {self.spec.name!r} has neither weights nor a runtime")


def _depthwise_forward(x: np.ndarray, w: np.ndarray, layer: LayerSpec) -> np.ndarray:
    """Dense depthwise conv: each channel convolved with its own filter."""
    if w.shape != (layer.c_out, 1, layer.k_h, layer.k_w):
        raise ShapeError(f"layer {layer.name!r}: bad depthwise weight shape {w.shape}")
    oh, ow = out_hw(layer)
    out = np.empty((layer.c_out, oh * ow))
    one = LayerSpec(name=layer.name + "/ch", kind=LayerKind.CONV, c_in=1,
                    c_out=1, k_h=layer.k_h, k_w=layer.k_w, stride=layer.stride,
                    groups=1, in_h=layer.in_h, in_w=layer.in_w)
    for c in range(layer.c_out):
        cols = unroll_im2col(x[c:c + 1], one)
        out[c] = w[c, 0].reshape(-1) @ cols
    return out.reshape(layer.c_out, oh, ow)


def layer_forward(x: np.ndarray, nl: NetworkLayer, use_pq: bool = True) -> np.ndarray:
    """Run one layer on a spatial tensor (c_in, h, w) or vector (c_in,)."""
    spec = nl.spec
    if spec.kind is LayerKind.LINEAR:
        vec = np.asarray(x, dtype=np.float64)
        if vec.ndim == 3:
            vec = vec.mean(axis=(1, 2))  # global average pool into the head
        if vec.shape != (spec.c_in,):
            raise ShapeError(f"layer {spec.name!r}: expected vector of {spec.c_in}")
        if use_pq and nl.runtime is not None:
            return pq_forward(vec[:, None], nl.runtime)[:, 0]
        return reference_forward(vec[:, None], nl.weights)[:, 0]
    if np.shape(x) != (spec.c_in, spec.in_h, spec.in_w):
        raise ShapeError(
            f"layer {spec.name!r}: input shape {np.shape(x)} does not match "
            f"({spec.c_in}, {spec.in_h}, {spec.in_w})")
    if spec.kind is LayerKind.DEPTHWISE:
        return _depthwise_forward(np.asarray(x, dtype=np.float64), nl.weights, spec)
    cols = unroll_im2col(x, spec)
    if use_pq and nl.runtime is not None:
        y = pq_forward(cols, nl.runtime)
    else:
        y = reference_forward(cols, unroll_weights(nl.weights, spec))
    oh, ow = out_hw(spec)
    return y.reshape(spec.c_out, oh, ow)


def network_forward(x: np.ndarray, layers: list[NetworkLayer],
                    use_pq: bool = True) -> np.ndarray:
    """Execute layers in order, rolling matrices back to spatial tensors
    between layers. PQ layers run through their runtime; others densely."""
    out = np.asarray(x, dtype=np.float64)
    for nl in layers:
        out = layer_forward(out, nl, use_pq=use_pq)
        if nl.activation == "relu":
            out = np.maximum(out, 0.0)
    return out
