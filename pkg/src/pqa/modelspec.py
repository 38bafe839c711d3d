"""Model description files and the bundled model zoo.

A model file is a JSON document with a ``layers`` array in execution
order. Each entry carries the layer geometry, a ``bias`` flag that only
affects parameter/FLOP accounting, and optional per-layer PQ settings
(``l_s``, ``n_p``, ``metric``) honored when ``pq_enabled`` is true.
Unknown keys are rejected.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .core import (
    LayerKind,
    LayerSpec,
    Metric,
    PQConfig,
    ShapeError,
    derive_unrolled_dims,
    out_hw,
)

_LAYER_KEYS = {"name", "kind", "c_in", "c_out", "k_h", "k_w", "stride",
               "groups", "in_h", "in_w", "pq_enabled", "bias",
               "l_s", "n_p", "metric"}

ZOO_NAMES = ("resnet20", "micronet", "dw")


@dataclass(frozen=True)
class ModelLayer:
    """A LayerSpec plus accounting and PQ annotations from the file."""

    spec: LayerSpec
    bias: bool = False
    l_s: int | None = None
    n_p: int | None = None
    metric: Metric = Metric.L2_SQUARED

    def pq_config(self, default_l_s: int | None = None,
                  default_n_p: int | None = None, tau: float = 1.0) -> PQConfig:
        l_s = default_l_s if default_l_s is not None else self.l_s
        n_p = default_n_p if default_n_p is not None else self.n_p
        if l_s is None or n_p is None:
            raise ValueError(
                f"layer {self.spec.name!r} is pq_enabled but has no l_s/n_p "
                "(set them in the model file or pass --ls/--np)")
        return PQConfig(n_p=n_p, l_s=l_s, metric=self.metric, tau=tau)


@dataclass(frozen=True)
class Model:
    name: str
    layers: tuple[ModelLayer, ...]

    @property
    def pq_layers(self) -> tuple[ModelLayer, ...]:
        return tuple(ml for ml in self.layers if ml.spec.pq_enabled)

    @property
    def input_shape(self) -> tuple[int, int, int]:
        first = self.layers[0].spec
        return first.c_in, first.in_h, first.in_w


def dense_params(ml: ModelLayer) -> int:
    """Parameter count of the layer executed densely (weights + bias)."""
    s = ml.spec
    b = 1 if ml.bias else 0
    if s.kind is LayerKind.LINEAR:
        return (s.c_in + b) * s.c_out
    return (s.k_h * s.k_w * s.c_in // s.groups + b) * s.c_out


def dense_flops(ml: ModelLayer) -> int:
    """FLOPs of the dense (im2col) execution: one multiply and one add
    per tap, bias counted as a fused multiply-add."""
    s = ml.spec
    b = 1 if ml.bias else 0
    if s.kind is LayerKind.LINEAR:
        return 2 * (s.c_in + b) * s.c_out
    oh, ow = out_hw(s)
    return 2 * (s.k_h * s.k_w * s.c_in // s.groups + b) * oh * ow * s.c_out


def _parse_layer(entry: dict, index: int) -> ModelLayer:
    if not isinstance(entry, dict):
        raise ValueError(f"layer {index}: expected an object")
    unknown = set(entry) - _LAYER_KEYS
    if unknown:
        raise ValueError(f"layer {index}: unknown keys {sorted(unknown)}")
    for key in ("name", "kind", "c_in", "c_out"):
        if key not in entry:
            raise ValueError(f"layer {index}: missing required key {key!r}")
    spec = LayerSpec(
        name=entry["name"], kind=entry["kind"], c_in=entry["c_in"],
        c_out=entry["c_out"], k_h=entry.get("k_h", 1), k_w=entry.get("k_w", 1),
        stride=entry.get("stride", 1), groups=entry.get("groups", 1),
        in_h=entry.get("in_h", 1), in_w=entry.get("in_w", 1),
        pq_enabled=bool(entry.get("pq_enabled", False)))
    return ModelLayer(spec=spec, bias=bool(entry.get("bias", False)),
                      l_s=entry.get("l_s"), n_p=entry.get("n_p"),
                      metric=Metric(entry.get("metric", "l2_squared")))


def _validate_chain(model: Model) -> None:
    """Channel and spatial consistency of consecutive layers. A linear
    layer after a spatial one implies a global average pool."""
    prev: LayerSpec | None = None
    prev_hw: tuple[int, int] | None = None
    for ml in model.layers:
        s = ml.spec
        if prev is not None:
            if s.c_in != prev.c_out:
                raise ShapeError(
                    f"layer {s.name!r}: c_in={s.c_in} does not chain from "
                    f"{prev.name!r} (c_out={prev.c_out})")
            if s.kind is not LayerKind.LINEAR and prev_hw is not None \
                    and (s.in_h, s.in_w) != prev_hw:
                raise ShapeError(
                    f"layer {s.name!r}: input {s.in_h}x{s.in_w} does not match "
                    f"{prev.name!r} output {prev_hw[0]}x{prev_hw[1]}")
        prev = s
        prev_hw = None if s.kind is LayerKind.LINEAR else out_hw(s)


def parse_model(doc: dict) -> Model:
    if not isinstance(doc, dict):
        raise ValueError("model document must be a JSON object")
    unknown = set(doc) - {"name", "description", "layers"}
    if unknown:
        raise ValueError(f"unknown model keys {sorted(unknown)}")
    layers = doc.get("layers")
    if not isinstance(layers, list) or not layers:
        raise ValueError("model must declare a non-empty 'layers' array")
    model = Model(name=str(doc.get("name", "unnamed")),
                  layers=tuple(_parse_layer(e, i) for i, e in enumerate(layers)))
    _validate_chain(model)
    return model


def load_model(path: str | Path) -> Model:
    path = Path(path)
    if path.suffix == "" and str(path) in ZOO_NAMES:
        return load_zoo_model(str(path))
    try:
        text = path.read_text()
    except OSError as exc:
        raise OSError(f"cannot read model file {path}: {exc}") from exc
    return parse_model(json.loads(text))


def zoo_model_text(name: str) -> str:
    if name not in ZOO_NAMES:
        raise ValueError(f"unknown zoo model {name!r}; available: {', '.join(ZOO_NAMES)}")
    return resources.files("pqa").joinpath(f"zoo/{name}.json").read_text()


def load_zoo_model(name: str) -> Model:
    return parse_model(json.loads(zoo_model_text(name)))


def layer_unrolled(ml: ModelLayer):
    return derive_unrolled_dims(ml.spec)
