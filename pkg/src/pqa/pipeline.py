"""Orchestration shared by the CLI commands: deterministic weight
synthesis, activation collection, prototype/LUT fitting per layer, and
float/quantized evaluation over a model."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import LayerKind, PQConfig, ShapeError, derive_unrolled_dims, subspace_layout
from .encoder import (
    build_lut,
    decode_hard,
    encode_hard,
    encoding_mse,
    fit_prototypes,
    unroll_im2col,
    unroll_weights,
)
from .inference import (
    NetworkLayer,
    PQLayerRuntime,
    layer_forward,
    pq_forward,
    reference_forward,
)
from .modelspec import Model, ModelLayer
from .quantizer import (
    Granularity,
    QuantScheme,
    calibrate_global,
    quantize_runtime,
    quantized_pq_forward,
)


def weight_shape(ml: ModelLayer) -> tuple[int, ...]:
    s = ml.spec
    if s.kind is LayerKind.LINEAR:
        return (s.c_out, s.c_in)
    return (s.c_out, s.c_in // s.groups, s.k_h, s.k_w)


def _unrolled_columns(x: np.ndarray, spec) -> np.ndarray:
    """Unrolled input matrix for one layer, pooling spatial tensors into
    the vector a linear layer consumes (mirrors layer_forward)."""
    if spec.kind is LayerKind.LINEAR:
        vec = np.asarray(x, dtype=np.float64)
        if vec.ndim == 3:
            vec = vec.mean(axis=(1, 2))
        return vec.reshape(spec.c_in, 1)
    return unroll_im2col(x, spec)


def synthesize_weights(model: Model, seed: int) -> dict[str, np.ndarray]:
    """Deterministic stand-in weights (He-scaled normals), one tensor per
    layer in model order."""
    rng = np.random.default_rng(seed)
    out: dict[str, np.ndarray] = {}
    for ml in model.layers:
        shape = weight_shape(ml)
        fan_in = int(np.prod(shape[1:]))
        out[ml.spec.name] = rng.standard_normal(shape) / np.sqrt(fan_in)
    return out


def build_network(model: Model, weights: dict[str, np.ndarray],
                  runtimes: dict[str, PQLayerRuntime] | None = None,
                  ) -> list[NetworkLayer]:
    """Executable layer list; ReLU after every layer except the last."""
    runtimes = runtimes or {}
    layers = []
    last = len(model.layers) - 1
    for i, ml in enumerate(model.layers):
        name = ml.spec.name
        if name not in weights:
            raise ShapeError(f"missing weights for layer {name!r}")
        layers.append(NetworkLayer(
            spec=ml.spec, weights=weights[name], runtime=runtimes.get(name),
            activation="none" if i == last else "relu"))
    return layers


def collect_pq_inputs(model: Model, weights: dict[str, np.ndarray],
                      samples: np.ndarray, *, seed: int,
                      max_columns: int = 4096) -> dict[str, np.ndarray]:
    """Unrolled input columns seen by each PQ layer when the samples run
    through the dense network, subsampled to at most ``max_columns``."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 4:
        raise ShapeError("samples must be (n, c_in, h, w)")
    if samples.shape[1:] != model.input_shape:
        raise ShapeError(
            f"sample shape {samples.shape[1:]} does not match the model "
            f"input {model.input_shape} (layer {model.layers[0].spec.name!r})")
    net = build_network(model, weights)
    per_layer: dict[str, list[np.ndarray]] = {ml.spec.name: []
                                              for ml in model.pq_layers}
    n = samples.shape[0]
    per_sample = max(1, max_columns // n)
    rng = np.random.default_rng(seed)
    for x in samples:
        out = x
        for nl in net:
            if nl.spec.pq_enabled:
                cols = _unrolled_columns(out, nl.spec)
                take = min(per_sample, cols.shape[1])
                sel = np.sort(rng.choice(cols.shape[1], size=take, replace=False))
                per_layer[nl.spec.name].append(cols[:, sel])
            out = layer_forward(out, nl, use_pq=False)
            if nl.activation == "relu":
                out = np.maximum(out, 0.0)
    collected = {}
    for name, chunks in per_layer.items():
        cols = np.hstack(chunks)
        if cols.shape[1] > max_columns:  # many samples can overshoot the cap
            sel = np.sort(rng.choice(cols.shape[1], size=max_columns,
                                     replace=False))
            cols = cols[:, sel]
        collected[name] = cols
    return collected


@dataclass(frozen=True)
class FittedLayer:
    layer: ModelLayer
    config: PQConfig
    runtime: PQLayerRuntime
    mse_enc: float


def fit_model(model: Model, weights: dict[str, np.ndarray],
              pq_inputs: dict[str, np.ndarray], *, l_s: int | None,
              n_p: int | None, seed: int, max_iters: int = 20,
              ) -> list[FittedLayer]:
    """Fit a prototype bank and build the dot-product table for every PQ
    layer, in model order."""
    fitted = []
    for i, ml in enumerate(model.pq_layers):
        name = ml.spec.name
        cfg = ml.pq_config(default_l_s=l_s, default_n_p=n_p)
        dims = derive_unrolled_dims(ml.spec)
        layout = subspace_layout(dims.a, cfg.l_s)
        columns = pq_inputs[name]
        bank = fit_prototypes(columns, cfg, layout, max_iters=max_iters,
                              seed=seed + i)
        lut = build_lut(unroll_weights(weights[name], ml.spec), bank, layout)
        rt = PQLayerRuntime(bank=bank, lut=lut, layout=layout, config=cfg,
                            layer=ml.spec)
        fitted.append(FittedLayer(layer=ml, config=cfg, runtime=rt,
                                  mse_enc=encoding_mse(columns, bank, layout, cfg.metric)))
    return fitted


@dataclass(frozen=True)
class LayerEval:
    name: str
    mse_enc: float
    mse_out: float
    max_abs_err: float
    quant_mse: float | None = None
    quant_max_abs: float | None = None
    quant_bound: float | None = None
    saturations: int | None = None


@dataclass(frozen=True)
class ModelEval:
    layers: list[LayerEval]
    end_to_end_max_err: float


def evaluate_model(model: Model, weights: dict[str, np.ndarray],
                   runtimes: dict[str, PQLayerRuntime], samples: np.ndarray,
                   scheme: QuantScheme | None = None, *,
                   calib_columns: dict[str, np.ndarray] | None = None,
                   ) -> ModelEval:
    """Per-layer PQ error on the dense reference activations, end-to-end
    divergence of the PQ network, and (optionally) quantized-vs-float
    divergence with its propagated bound and saturation counts."""
    samples = np.asarray(samples, dtype=np.float64)
    net_dense = build_network(model, weights)
    net_pq = build_network(model, weights, runtimes)

    qrts = {}
    if scheme is not None:
        rts = [runtimes[ml.spec.name] for ml in model.pq_layers]
        calibs = [None if calib_columns is None
                  else calib_columns.get(ml.spec.name)
                  for ml in model.pq_layers]
        shared_proto = shared_lut = None
        if scheme.granularity is Granularity.GLOBAL:
            shared_proto, shared_lut = calibrate_global(rts, scheme, calibs)
        for ml, rt, cal in zip(model.pq_layers, rts, calibs):
            qrts[ml.spec.name] = quantize_runtime(
                rt, scheme, cal, shared_proto_params=shared_proto,
                shared_lut_params=shared_lut)

    sums: dict[str, dict[str, float]] = {
        ml.spec.name: {"se_enc": 0.0, "n_enc": 0, "se_out": 0.0, "n_out": 0,
                       "max_abs": 0.0, "q_se": 0.0, "q_max": 0.0, "sat": 0}
        for ml in model.pq_layers}
    end_to_end = 0.0
    for x in samples:
        out_d = x
        for nl, ml in zip(net_dense, model.layers):
            name = nl.spec.name
            if nl.spec.pq_enabled:
                rt = runtimes[name]
                cols = _unrolled_columns(out_d, nl.spec)
                y_ref = reference_forward(cols, unroll_weights(nl.weights, nl.spec))
                y_pq = pq_forward(cols, rt)
                enc = encode_hard(cols, rt.bank, rt.layout, rt.config.metric)
                rebuilt = decode_hard(rt.bank, enc.indices, cols.shape[0])
                s = sums[name]
                s["se_enc"] += float(np.sum((rebuilt - cols) ** 2))
                s["n_enc"] += cols.size
                s["se_out"] += float(np.sum((y_pq - y_ref) ** 2))
                s["n_out"] += y_ref.size
                s["max_abs"] = max(s["max_abs"], float(np.max(np.abs(y_pq - y_ref))))
                if scheme is not None:
                    res = quantized_pq_forward(cols, qrts[name], rt)
                    s["q_se"] += float(np.sum((res.output - y_pq) ** 2))
                    s["q_max"] = max(s["q_max"], float(np.max(np.abs(res.output - y_pq))))
                    s["sat"] += res.saturations
            out_d = layer_forward(out_d, nl, use_pq=False)
            if nl.activation == "relu":
                out_d = np.maximum(out_d, 0.0)
        out_p = x
        for nl in net_pq:
            out_p = layer_forward(out_p, nl, use_pq=True)
            if nl.activation == "relu":
                out_p = np.maximum(out_p, 0.0)
        end_to_end = max(end_to_end, float(np.max(np.abs(out_p - out_d))))

    rows = []
    for ml in model.pq_layers:
        name = ml.spec.name
        s = sums[name]
        quant_mse = quant_max = bound = sat = None
        if scheme is not None:
            qrt = qrts[name]
            quant_mse = s["q_se"] / max(s["n_out"], 1)
            quant_max = s["q_max"]
            sat = s["sat"]
            n_s = runtimes[name].layout.n_s
            step = max(p.scale for p in qrt.lut_params)
            bound = n_s * (step / 2.0 + 2.0 ** -(qrt.acc_frac_bits + 1))
        rows.append(LayerEval(
            name=name, mse_enc=s["se_enc"] / max(s["n_enc"], 1),
            mse_out=s["se_out"] / max(s["n_out"], 1), max_abs_err=s["max_abs"],
            quant_mse=quant_mse, quant_max_abs=quant_max, quant_bound=bound,
            saturations=sat))
    return ModelEval(layers=rows, end_to_end_max_err=end_to_end)
