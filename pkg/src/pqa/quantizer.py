"""Post-training asymmetric linear quantization of prototypes and LUT
entries at 2..16 bits.

Prototypes stay in the quantized domain: incoming inputs are quantized
with the same parameters and distances are computed on integer codes.
LUT entries are dequantized and summed in a saturating 16-bit fixed-point
accumulator; saturation events are counted, never raised.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .core import Metric, ShapeError
from .inference import PQLayerRuntime
from .encoder import pad_to_subspaces

ACC_BITS = 16
_ACC_MAX = 2 ** (ACC_BITS - 1) - 1
_ACC_MIN = -(2 ** (ACC_BITS - 1))


class Granularity(str, Enum):
    GLOBAL = "global"
    PER_LAYER = "per_layer"
    PER_SUBSPACE = "per_subspace"


class Calibration(str, Enum):
    FULL_RANGE = "full_range"
    PERCENTILE = "percentile"


@dataclass(frozen=True)
class QuantParams:
    """Unsigned affine code: code = round(x/scale) + zero_point, clamped
    to [0, 2^bits - 1]."""

    scale: float
    zero_point: int
    bits: int

    def __post_init__(self) -> None:
        if not self.scale > 0:
            raise ValueError("scale must be > 0")
        if not 2 <= self.bits <= 16:
            raise ValueError("bits must be in [2, 16]")

    @property
    def max_code(self) -> int:
        return 2 ** self.bits - 1


@dataclass(frozen=True)
class QuantScheme:
    """Bitwidths, parameter granularity, and calibration policy."""

    proto_bits: int = 16
    lut_bits: int = 16
    granularity: Granularity = Granularity.PER_LAYER
    calibration: Calibration = Calibration.FULL_RANGE
    lo_pct: float = 30.0
    hi_pct: float = 70.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "granularity", Granularity(self.granularity))
        object.__setattr__(self, "calibration", Calibration(self.calibration))
        for b in (self.proto_bits, self.lut_bits):
            if not 2 <= b <= 16:
                raise ValueError("bits must be in [2, 16]")
        if not self.lo_pct < self.hi_pct:
            raise ValueError("lo_pct must be < hi_pct")


def calibrate(values, bits: int, calibration: Calibration = Calibration.FULL_RANGE,
              lo_pct: float = 30.0, hi_pct: float = 70.0) -> QuantParams:
    """Scale and zero point from observed values.

    full_range uses [min, max]; percentile uses the empirical
    [lo_pct, hi_pct] percentiles. A constant input gets parameters that
    round-trip the constant exactly.
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise ValueError("cannot calibrate from an empty value set")
    if Calibration(calibration) is Calibration.PERCENTILE:
        lo, hi = np.percentile(v, [lo_pct, hi_pct])
    else:
        lo, hi = float(v.min()), float(v.max())
    max_code = 2 ** bits - 1
    if hi == lo:
        # degenerate range: pick scale so the constant sits on the code grid
        scale = abs(lo) if lo != 0.0 else 1.0
    else:
        scale = (hi - lo) / max_code
    # The zero point is an unclamped integer: clamping it into the code
    # range would break the half-step round-trip bound whenever the
    # calibrated range sits away from zero (e.g. percentile ranges of
    # positive data). Codes themselves always clamp to [0, max_code].
    zero_point = int(np.round(-lo / scale))
    return QuantParams(scale=scale, zero_point=zero_point, bits=bits)


def quantize(x, p: QuantParams) -> np.ndarray:
    """Real -> integer code (vectorized; out-of-range values clamp)."""
    codes = np.round(np.asarray(x, dtype=np.float64) / p.scale) + p.zero_point
    return np.clip(codes, 0, p.max_code).astype(np.int64)


def dequantize(code, p: QuantParams) -> np.ndarray:
    """Integer code -> real: (code - zero_point) * scale."""
    return (np.asarray(code, dtype=np.float64) - p.zero_point) * p.scale


@dataclass(frozen=True)
class QuantizedRuntime:
    """Quantized deployment state for one PQ layer.

    Parameters are stored per subspace; coarser granularities repeat the
    same parameters across subspaces (and across layers for global).
    The prototype path is never dequantized; only the LUT path is.
    """

    proto_codes: np.ndarray  # (n_s, n_p, l_s) int64
    proto_params: tuple[QuantParams, ...]
    lut_codes: np.ndarray    # (c_out, n_s, n_p) int64
    lut_params: tuple[QuantParams, ...]
    scheme: QuantScheme
    acc_frac_bits: int
    acc_bits: int = ACC_BITS

    def __post_init__(self) -> None:
        n_s = self.proto_codes.shape[0]
        if len(self.proto_params) != n_s or len(self.lut_params) != n_s:
            raise ShapeError("need one parameter set per subspace")
        for codes, params in ((self.proto_codes, self.proto_params),
                              (self.lut_codes, self.lut_params)):
            for p in params:
                if codes.min() < 0 or codes.max() > p.max_code:
                    raise ValueError("codes out of range for their bitwidth")


@dataclass(frozen=True)
class QuantizedForwardResult:
    output: np.ndarray
    saturations: int
    indices: np.ndarray


def _calibration_pools(rt: PQLayerRuntime, calib_samples: np.ndarray | None,
                       ) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Per-subspace value pools for the prototype path (prototypes plus
    the inputs that will share their parameters) and the LUT path."""
    proto_pools = []
    lut_pools = []
    sub = None
    if calib_samples is not None:
        sub = pad_to_subspaces(np.asarray(calib_samples, dtype=np.float64),
                               rt.layout, rt.config.l_s)
    for n in range(rt.layout.n_s):
        vals = [rt.bank.values[n].ravel()]
        if sub is not None:
            vals.append(sub[n].ravel())
        proto_pools.append(np.concatenate(vals))
        lut_pools.append(rt.lut.values[:, n, :].ravel())
    return proto_pools, lut_pools


def _params_for(pools: list[np.ndarray], bits: int, scheme: QuantScheme,
                shared: QuantParams | None) -> tuple[QuantParams, ...]:
    if shared is not None:
        return tuple(shared for _ in pools)
    if scheme.granularity is Granularity.PER_SUBSPACE:
        return tuple(calibrate(p, bits, scheme.calibration, scheme.lo_pct,
                               scheme.hi_pct) for p in pools)
    merged = calibrate(np.concatenate(pools), bits, scheme.calibration,
                       scheme.lo_pct, scheme.hi_pct)
    return tuple(merged for _ in pools)


def _acc_frac_bits(lut_params: tuple[QuantParams, ...]) -> int:
    """Fraction bits of the accumulator: the largest shift keeping any
    single dequantized LUT term representable in 16 signed bits."""
    peak = max(max(abs(dequantize(0, p)), abs(dequantize(p.max_code, p)))
               for p in lut_params)
    if peak == 0:
        return ACC_BITS - 1
    f = ACC_BITS - 1
    while f > 0 and round(peak * 2 ** f) > _ACC_MAX:
        f -= 1
    return f


def quantize_runtime(rt: PQLayerRuntime, scheme: QuantScheme,
                     calib_samples: np.ndarray | None = None,
                     shared_proto_params: QuantParams | None = None,
                     shared_lut_params: QuantParams | None = None,
                     ) -> QuantizedRuntime:
    """Quantize one layer's prototypes and LUT under a scheme.

    ``shared_*`` carry externally pooled parameters for global
    granularity (see :func:`calibrate_global`).
    """
    proto_pools, lut_pools = _calibration_pools(rt, calib_samples)
    proto_params = _params_for(proto_pools, scheme.proto_bits, scheme,
                               shared_proto_params)
    lut_params = _params_for(lut_pools, scheme.lut_bits, scheme,
                             shared_lut_params)
    proto_codes = np.stack([quantize(rt.bank.values[n], proto_params[n])
                            for n in range(rt.layout.n_s)])
    lut_codes = np.stack([quantize(rt.lut.values[:, n, :], lut_params[n])
                          for n in range(rt.layout.n_s)], axis=1)
    return QuantizedRuntime(proto_codes=proto_codes, proto_params=proto_params,
                            lut_codes=lut_codes, lut_params=lut_params,
                            scheme=scheme,
                            acc_frac_bits=_acc_frac_bits(lut_params))


def calibrate_global(runtimes: list[PQLayerRuntime], scheme: QuantScheme,
                     calib_samples: list[np.ndarray | None] | None = None,
                     ) -> tuple[QuantParams, QuantParams]:
    """Pool calibration values across all PQ layers of a model and return
    shared (proto, lut) parameters for global granularity."""
    if not runtimes:
        raise ValueError("need at least one runtime")
    if calib_samples is None:
        calib_samples = [None] * len(runtimes)
    proto_all, lut_all = [], []
    for rt, samples in zip(runtimes, calib_samples):
        pp, lp = _calibration_pools(rt, samples)
        proto_all.extend(pp)
        lut_all.extend(lp)
    proto = calibrate(np.concatenate(proto_all), scheme.proto_bits,
                      scheme.calibration, scheme.lo_pct, scheme.hi_pct)
    lut = calibrate(np.concatenate(lut_all), scheme.lut_bits,
                    scheme.calibration, scheme.lo_pct, scheme.hi_pct)
    return proto, lut


def quantized_encode_hard(input_unrolled: np.ndarray, qrt: QuantizedRuntime,
                          rt: PQLayerRuntime) -> np.ndarray:
    """Hard indices from integer-domain distances.

    The input is quantized with the prototype parameters of its subspace;
    L2 is an integer square-sum, L1 an integer abs-sum. Ties break low.
    """
    sub = pad_to_subspaces(np.asarray(input_unrolled, dtype=np.float64),
                           rt.layout, rt.config.l_s)
    n_s, _, cols = sub.shape
    indices = np.empty((n_s, cols), dtype=np.int64)
    for n in range(n_s):
        x_codes = quantize(sub[n].T, qrt.proto_params[n])  # (cols, l_s)
        diff = x_codes[:, None, :] - qrt.proto_codes[n][None, :, :]
        if rt.config.metric is Metric.L2_SQUARED:
            d = np.sum(diff * diff, axis=2)
        else:
            d = np.sum(np.abs(diff), axis=2)
        indices[n] = np.argmin(d, axis=1)
    return indices


def quantized_pq_forward(input_unrolled: np.ndarray, qrt: QuantizedRuntime,
                         rt: PQLayerRuntime,
                         next_input_params: QuantParams | None = None,
                         ) -> QuantizedForwardResult:
    """PQ forward entirely under the quantized contract.

    LUT codes are dequantized and accumulated in signed 16-bit fixed
    point (``acc_frac_bits`` fraction bits) with saturation; saturation
    events are counted. When ``next_input_params`` is given the output is
    requantized with them, modeling storage into the next layer's buffer.
    """
    indices = quantized_encode_hard(input_unrolled, qrt, rt)
    cols = indices.shape[1]
    f = 2.0 ** qrt.acc_frac_bits
    acc = np.zeros((rt.lut.c_out, cols), dtype=np.int64)
    saturations = 0
    for n in range(rt.layout.n_s):
        vals = dequantize(qrt.lut_codes[:, n, indices[n]], qrt.lut_params[n])
        acc = acc + np.round(vals * f).astype(np.int64)
        over = (acc > _ACC_MAX) | (acc < _ACC_MIN)
        saturations += int(over.sum())
        acc = np.clip(acc, _ACC_MIN, _ACC_MAX)
    out = acc / f
    if next_input_params is not None:
        out = dequantize(quantize(out, next_input_params), next_input_params)
    return QuantizedForwardResult(output=out, saturations=saturations,
                                  indices=indices)


def roundtrip_bound(p: QuantParams) -> float:
    """Worst-case |dequantize(quantize(x)) - clamp(x, range)| for values
    inside the calibrated range: half a step."""
    return p.scale / 2.0
