import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pqa.core import LayerSpec, PQConfig, subspace_layout
from pqa.encoder import PrototypeBank, build_lut, encode_hard
from pqa.inference import PQLayerRuntime, pq_forward
from pqa.quantizer import (
    Calibration,
    QuantParams,
    QuantScheme,
    calibrate,
    calibrate_global,
    dequantize,
    quantize,
    quantize_runtime,
    quantized_encode_hard,
    quantized_pq_forward,
    roundtrip_bound,
)


def make_runtime(rng, a=8, l_s=2, n_p=4, c_out=3, cols=6, bank_values=None,
                 weight_scale=1.0):
    layout = subspace_layout(a, l_s)
    if bank_values is None:
        bank_values = rng.standard_normal((layout.n_s, n_p, l_s))
    bank = PrototypeBank(bank_values)
    w = rng.standard_normal((c_out, a)) * weight_scale
    layer = LayerSpec(name="q", kind="pointwise", c_in=a, c_out=c_out,
                      in_h=1, in_w=cols, pq_enabled=True)
    rt = PQLayerRuntime(bank=bank, lut=build_lut(w, bank, layout),
                        layout=layout, config=PQConfig(n_p=n_p, l_s=l_s),
                        layer=layer)
    return rt


# ---------------------------------------------------------------------------
# calibrate / quantize / dequantize
# ---------------------------------------------------------------------------

def test_calibrate_full_range_example():
    p = calibrate([0.0, 255.0], 8)
    assert p.scale == 1.0 and p.zero_point == 0


def test_calibrate_constant_roundtrips_exactly():
    for c in (2.3, -1.7, 0.0, 1e6):
        for bits in (2, 5, 16):
            p = calibrate([c, c, c], bits)
            assert dequantize(quantize(c, p), p) == c


def test_calibrate_percentile_range():
    values = np.arange(101.0)
    p = calibrate(values, 8, Calibration.PERCENTILE)
    lo_oracle, hi_oracle = np.percentile(values, [30, 70])
    step = 1.0  # one sample step of the 0..100 grid
    assert abs(dequantize(0, p) - lo_oracle) <= step
    assert abs(dequantize(p.max_code, p) - hi_oracle) <= step


def test_calibrate_rejects_empty():
    with pytest.raises(ValueError):
        calibrate([], 8)


def test_quantize_min_maps_to_code_zero():
    rng = np.random.default_rng(0)
    values = rng.standard_normal(100)
    p = calibrate(values, 6)
    assert quantize(float(values.min()), p) == 0


def test_quantize_hand_example():
    p = QuantParams(scale=0.5, zero_point=4, bits=8)
    assert quantize(1.0, p) == 6
    assert dequantize(6, p) == 1.0


def test_quantize_clamps_far_values():
    p = calibrate([0.0, 1.0], 4)
    assert quantize(1e9, p) == p.max_code
    assert quantize(-1e9, p) == 0


@settings(max_examples=200)
@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=2, max_size=40),
       st.integers(2, 16),
       st.floats(-2e6, 2e6, allow_nan=False))
def test_roundtrip_bound_property(values, bits, x):
    lo, hi = min(values), max(values)
    if lo == hi:
        values = values + [lo + 1.0]  # keep the range non-degenerate
        hi = lo + 1.0
    p = calibrate(values, bits)
    err = abs(float(dequantize(quantize(x, p), p)) - float(np.clip(x, lo, hi)))
    assert err <= p.scale / 2 + 1e-9 * max(abs(lo), abs(hi), 1.0)


def test_bits_monotonicity_of_bound():
    values = np.linspace(-3.0, 5.0, 50)
    bounds = [roundtrip_bound(calibrate(values, b)) for b in range(2, 17)]
    assert all(b2 <= b1 for b1, b2 in zip(bounds, bounds[1:]))


# ---------------------------------------------------------------------------
# runtime quantization
# ---------------------------------------------------------------------------

def test_granularity_nesting_of_scales():
    rng = np.random.default_rng(1)
    # subspace ranges differing by 100x
    bank_values = rng.standard_normal((4, 4, 2))
    bank_values *= np.array([0.01, 0.1, 1.0, 1.0])[:, None, None]
    rt = make_runtime(rng, bank_values=bank_values)
    per_sub = quantize_runtime(rt, QuantScheme(granularity="per_subspace"))
    per_layer = quantize_runtime(rt, QuantScheme(granularity="per_layer"))
    for n in range(rt.layout.n_s):
        assert per_sub.proto_params[n].scale <= per_layer.proto_params[n].scale + 1e-15
    # global pools at least the layer's values, so its scale is >= per-layer
    shared_proto, shared_lut = calibrate_global([rt], QuantScheme())
    assert per_layer.proto_params[0].scale <= shared_proto.scale + 1e-15


def test_per_subspace_roundtrip_beats_per_layer():
    rng = np.random.default_rng(2)
    bank_values = rng.standard_normal((4, 4, 2))
    bank_values *= np.array([0.01, 0.1, 1.0, 100.0])[:, None, None]
    rt = make_runtime(rng, bank_values=bank_values)
    per_sub = quantize_runtime(rt, QuantScheme(proto_bits=4, granularity="per_subspace"))
    per_layer = quantize_runtime(rt, QuantScheme(proto_bits=4, granularity="per_layer"))
    for n in range(rt.layout.n_s):
        err_sub = np.max(np.abs(
            dequantize(per_sub.proto_codes[n], per_sub.proto_params[n])
            - rt.bank.values[n]))
        err_layer = np.max(np.abs(
            dequantize(per_layer.proto_codes[n], per_layer.proto_params[n])
            - rt.bank.values[n]))
        assert err_sub <= err_layer + 1e-12


def test_two_bit_grid_bank_roundtrips_losslessly():
    rng = np.random.default_rng(3)
    grid = np.array([0.0, 0.5, 1.0, 1.5])
    bank_values = grid[rng.integers(0, 4, size=(4, 4, 2))]
    rt = make_runtime(rng, bank_values=bank_values)
    qrt = quantize_runtime(rt, QuantScheme(proto_bits=2, granularity="per_layer"))
    for n in range(rt.layout.n_s):
        back = dequantize(qrt.proto_codes[n], qrt.proto_params[n])
        assert np.array_equal(back, rt.bank.values[n])


def test_high_bits_index_agreement_on_margin_columns():
    rng = np.random.default_rng(4)
    rt = make_runtime(rng, a=8, l_s=2, n_p=6, cols=500)
    x = rng.standard_normal((8, 500))
    qrt = quantize_runtime(rt, QuantScheme(proto_bits=16), calib_samples=x)
    float_idx = encode_hard(x, rt.bank, rt.layout).indices
    quant_idx = quantized_encode_hard(x, qrt, rt)
    agree = 0
    considered = 0
    for n in range(rt.layout.n_s):
        d = np.stack([np.sum((x[2 * n:2 * n + 2].T - rt.bank.values[n, p]) ** 2,
                             axis=1) for p in range(6)], axis=1)
        top2 = np.sort(d, axis=1)[:, :2]
        margin = top2[:, 1] - top2[:, 0]
        thresh = 4.0 * qrt.proto_params[n].scale * rt.config.l_s
        mask = margin > thresh
        considered += int(mask.sum())
        agree += int((float_idx[n][mask] == quant_idx[n][mask]).sum())
    assert considered > 0
    assert agree / considered >= 0.99


def test_argmin_invariance_with_asserted_bound():
    rng = np.random.default_rng(5)
    rt = make_runtime(rng, a=6, l_s=3, n_p=5, cols=300)
    x = rng.standard_normal((6, 300))
    qrt = quantize_runtime(rt, QuantScheme(proto_bits=16), calib_samples=x)
    float_idx = encode_hard(x, rt.bank, rt.layout).indices
    quant_idx = quantized_encode_hard(x, qrt, rt)
    for n in range(rt.layout.n_s):
        s = qrt.proto_params[n].scale
        sub = x[3 * n:3 * n + 3].T
        d = np.stack([np.sum((sub - rt.bank.values[n, p]) ** 2, axis=1)
                      for p in range(5)], axis=1)
        # per-(column,prototype) distance distortion bound in float units
        dist_bound = np.stack(
            [np.sum(2 * s * np.abs(sub - rt.bank.values[n, p]) + s * s, axis=1)
             for p in range(5)], axis=1)
        order = np.argsort(d, axis=1)
        rows = np.arange(d.shape[0])
        margin = d[rows, order[:, 1]] - d[rows, order[:, 0]]
        bound = dist_bound[rows, order[:, 0]] + dist_bound[rows, order[:, 1]]
        mask = margin > bound
        assert mask.any()
        assert np.array_equal(float_idx[n][mask], quant_idx[n][mask])


# ---------------------------------------------------------------------------
# quantized forward
# ---------------------------------------------------------------------------

def test_quantized_forward_error_bound_well_scaled():
    rng = np.random.default_rng(6)
    rt = make_runtime(rng, a=8, l_s=2, n_p=4, c_out=3, cols=50,
                      weight_scale=0.1)
    x = rng.standard_normal((8, 50))
    qrt = quantize_runtime(rt, QuantScheme(proto_bits=16, lut_bits=16),
                           calib_samples=x)
    res = quantized_pq_forward(x, qrt, rt)
    assert res.saturations == 0
    float_idx = encode_hard(x, rt.bank, rt.layout).indices
    mask = np.all(res.indices == float_idx, axis=0)
    assert mask.mean() > 0.9
    y_float = pq_forward(x, rt)
    n_s = rt.layout.n_s
    lut_step = max(p.scale for p in qrt.lut_params)
    acc_step = 2.0 ** -qrt.acc_frac_bits
    bound = n_s * (lut_step / 2 + acc_step / 2)
    assert bound <= 2 * lut_step + n_s * acc_step  # n_s == 4 here
    diff = np.abs(res.output[:, mask] - y_float[:, mask])
    assert np.max(diff) <= bound + 1e-12


def test_quantized_forward_exact_representable_indices():
    rng = np.random.default_rng(7)
    grid = np.array([-1.0, 0.0, 1.0, 2.0])
    bank_values = grid[rng.integers(0, 4, size=(4, 4, 2))]
    rt = make_runtime(rng, bank_values=bank_values)
    picks = rng.integers(0, 4, size=(4, 10))
    x = np.concatenate([bank_values[n, picks[n]].T for n in range(4)], axis=0)
    qrt = quantize_runtime(rt, QuantScheme(proto_bits=16, lut_bits=16),
                           calib_samples=x)
    res = quantized_pq_forward(x, qrt, rt)
    float_idx = encode_hard(x, rt.bank, rt.layout).indices
    assert np.array_equal(res.indices, float_idx)


def test_two_bit_prototypes_with_separated_clusters():
    rng = np.random.default_rng(8)
    # centers on the 4-code grid that full-range calibration will pick
    centers = np.array([[0.0, 0.0], [6.0, 6.0], [12.0, 12.0], [18.0, 18.0]])
    bank_values = np.tile(centers[None, :, :], (2, 1, 1))
    rt = make_runtime(rng, a=4, l_s=2, n_p=4, bank_values=bank_values)
    picks = rng.integers(0, 4, size=(2, 40))
    x = np.concatenate([bank_values[n, picks[n]].T for n in range(2)], axis=0)
    x = np.clip(x + rng.uniform(-0.5, 0.5, size=x.shape), 0.0, 18.0)
    qrt = quantize_runtime(rt, QuantScheme(proto_bits=2), calib_samples=x)
    quant_idx = quantized_encode_hard(x, qrt, rt)
    float_idx = encode_hard(x, rt.bank, rt.layout).indices
    assert np.array_equal(quant_idx, float_idx)


def test_saturation_counted_not_raised():
    rng = np.random.default_rng(9)
    rt = make_runtime(rng, a=32, l_s=2, n_p=4, c_out=2, cols=8,
                      weight_scale=50.0)
    x = rng.standard_normal((32, 8)) * 10
    qrt = quantize_runtime(rt, QuantScheme(), calib_samples=x)
    res = quantized_pq_forward(x, qrt, rt)
    assert res.saturations > 0
    assert np.all(np.isfinite(res.output))


def test_requantization_on_chaining():
    rng = np.random.default_rng(10)
    rt = make_runtime(rng, weight_scale=0.1)
    x = rng.standard_normal((8, 6))
    qrt = quantize_runtime(rt, QuantScheme(), calib_samples=x)
    nxt = calibrate(np.linspace(-1, 1, 64), 8)
    res = quantized_pq_forward(x, qrt, rt, next_input_params=nxt)
    codes = quantize(res.output, nxt)
    assert np.array_equal(dequantize(codes, nxt), res.output)


def test_scheme_validation():
    with pytest.raises(ValueError):
        QuantScheme(proto_bits=1)
    with pytest.raises(ValueError):
        QuantScheme(lut_bits=17)
    with pytest.raises(ValueError):
        QuantScheme(lo_pct=70, hi_pct=30)
