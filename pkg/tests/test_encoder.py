import numpy as np
import pytest

from pqa.core import (
    LayerSpec,
    Metric,
    NumericError,
    PQConfig,
    ShapeError,
    subspace_layout,
)
from pqa.encoder import (
    Corrector,
    LutPQ,
    PrototypeBank,
    apply_corrector,
    build_lut,
    compute_distances,
    corrector_loss_and_grads,
    decode_hard,
    encode_hard,
    encode_soft,
    encoding_mse,
    fit_corrector,
    fit_prototypes,
    kmeans_fit,
    refit_lut,
    unroll_im2col,
    unroll_weights,
    verify_lut,
)
from pqa.inference import reference_forward

TOY_BANK = PrototypeBank(np.array([[[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]]))


def conv(c_in, c_out, k, stride, hw, name="t"):
    return LayerSpec(name=name, kind="conv", c_in=c_in, c_out=c_out, k_h=k,
                     k_w=k, stride=stride, groups=1, in_h=hw[0], in_w=hw[1])


def naive_conv2d_same(x, w, stride):
    """Independent direct convolution with zero same-padding."""
    c_in, h, width = x.shape
    c_out, _, kh, kw = w.shape
    oh = -(-h // stride)
    ow = -(-width // stride)
    pt = max((oh - 1) * stride + kh - h, 0) // 2
    pl = max((ow - 1) * stride + kw - width, 0) // 2
    out = np.zeros((c_out, oh, ow))
    for o in range(c_out):
        for i in range(oh):
            for j in range(ow):
                acc = 0.0
                for c in range(c_in):
                    for a in range(kh):
                        for b in range(kw):
                            ii = i * stride - pt + a
                            jj = j * stride - pl + b
                            if 0 <= ii < h and 0 <= jj < width:
                                acc += x[c, ii, jj] * w[o, c, a, b]
                out[o, i, j] = acc
    return out


# ---------------------------------------------------------------------------
# unrolling
# ---------------------------------------------------------------------------

def test_im2col_pointwise_is_reshape():
    layer = conv(3, 5, 1, 1, (4, 4))
    x = np.random.default_rng(0).standard_normal((3, 4, 4))
    assert np.array_equal(unroll_im2col(x, layer), x.reshape(3, 16))


def test_im2col_border_padding_counts():
    layer = conv(1, 1, 3, 1, (2, 2))
    cols = unroll_im2col(np.ones((1, 2, 2)), layer)
    assert cols.shape == (9, 4)
    assert np.array_equal(cols.sum(axis=0), [4.0, 4.0, 4.0, 4.0])


def test_im2col_resnet_block2_shape():
    layer = conv(32, 32, 3, 1, (16, 16))
    cols = unroll_im2col(np.zeros((32, 16, 16)), layer)
    assert cols.shape == (288, 256)


def test_im2col_matches_direct_convolution():
    rng = np.random.default_rng(3)
    for stride in (1, 2):
        layer = conv(3, 4, 3, stride, (6, 5))
        x = rng.standard_normal((3, 6, 5))
        w = rng.standard_normal((4, 3, 3, 3))
        via_matmul = reference_forward(unroll_im2col(x, layer),
                                       unroll_weights(w, layer))
        direct = naive_conv2d_same(x, w, stride)
        assert np.allclose(via_matmul.reshape(direct.shape), direct, atol=1e-12)


def test_im2col_rejects_mismatched_input():
    with pytest.raises(ShapeError):
        unroll_im2col(np.zeros((2, 4, 4)), conv(3, 4, 3, 1, (4, 4)))


# ---------------------------------------------------------------------------
# distances and encoding
# ---------------------------------------------------------------------------

def test_distances_l2():
    d = compute_distances(np.array([1.0, 2.0]), TOY_BANK, 0, Metric.L2_SQUARED)
    assert np.array_equal(d, [5.0, 1.0, 1.0])


def test_distances_l1():
    d = compute_distances(np.array([1.0, 2.0]), TOY_BANK, 0, Metric.L1)
    assert np.array_equal(d, [3.0, 1.0, 1.0])


def test_distance_zero_at_exact_prototype():
    d = compute_distances(np.array([2.0, 2.0]), TOY_BANK, 0)
    assert d[2] == 0.0


def test_encode_hard_tie_breaks_low():
    layout = subspace_layout(2, 2)
    enc = encode_hard(np.array([[1.0], [2.0]]), TOY_BANK, layout)
    assert enc.indices[0, 0] == 1


def test_encode_hard_exact_match_zero_distance():
    layout = subspace_layout(2, 2)
    x = TOY_BANK.values[0, [2, 0]].T  # columns equal to prototypes 2 and 0
    enc = encode_hard(x, TOY_BANK, layout, keep_distances=True)
    assert list(enc.indices[0]) == [2, 0]
    assert enc.distances[0, 0, 2] == 0.0 and enc.distances[0, 1, 0] == 0.0


def test_encode_hard_matches_bruteforce():
    rng = np.random.default_rng(11)
    bank = PrototypeBank(rng.standard_normal((4, 4, 2)))
    layout = subspace_layout(8, 2)
    x = rng.standard_normal((8, 4))
    enc = encode_hard(x, bank, layout)
    for j in range(4):
        for n in range(4):
            best = min(range(4), key=lambda p: float(
                np.sum((x[2 * n:2 * n + 2, j] - bank.values[n, p]) ** 2)))
            assert enc.indices[n, j] == best


def test_encode_soft_equidistant_mean():
    bank = PrototypeBank(np.array([[[0.0, 0.0], [2.0, 2.0]]]))
    layout = subspace_layout(2, 2)
    enc = encode_soft(np.array([[1.0], [1.0]]), bank, layout, tau=1.0)
    assert np.allclose(enc.soft_matrix[:, 0], [1.0, 1.0])


def test_encode_soft_small_tau_limit():
    rng = np.random.default_rng(5)
    bank = PrototypeBank(rng.standard_normal((3, 4, 2)))
    layout = subspace_layout(6, 2)
    x = bank.values[:, 1, :].reshape(6, 1)  # prototype 1 in every subspace
    enc = encode_soft(x, bank, layout, tau=1e-4)
    assert np.max(np.abs(enc.soft_matrix - x)) <= 1e-4


def test_encode_soft_frozen_weights():
    # softmax(-d) for d = [0, 1, 2]
    bank = PrototypeBank(np.array([[[0.0], [1.0], [2.0]]]))
    layout = subspace_layout(1, 1)
    x = np.array([[0.0]])
    # distances under l1 are [0, 1, 2]; expected blend of prototype values
    enc = encode_soft(x, bank, layout, metric=Metric.L1, tau=1.0)
    w = np.array([0.6652, 0.2447, 0.0900])
    assert abs(enc.soft_matrix[0, 0] - float(w @ [0.0, 1.0, 2.0])) < 1e-3


def test_encode_soft_weights_sum_to_one():
    rng = np.random.default_rng(6)
    bank = PrototypeBank(rng.standard_normal((2, 5, 3)))
    layout = subspace_layout(6, 3)
    x = rng.standard_normal((6, 7))
    enc = encode_soft(x, bank, layout, tau=0.3)
    # reconstructing weights from distances must match normalization
    d = enc.distances
    logits = -d / 0.3
    w = np.exp(logits - logits.max(axis=2, keepdims=True))
    w /= w.sum(axis=2, keepdims=True)
    assert np.all(np.abs(w.sum(axis=2) - 1.0) <= 1e-6)
    assert enc.soft_matrix.shape == x.shape


def test_encode_soft_rejects_bad_tau():
    with pytest.raises(ValueError):
        encode_soft(np.zeros((2, 1)), TOY_BANK, subspace_layout(2, 2), tau=0.0)


def test_soft_hard_consistency_small_tau():
    rng = np.random.default_rng(7)
    bank = PrototypeBank(rng.standard_normal((4, 6, 3)))
    layout = subspace_layout(12, 3)
    x = rng.standard_normal((12, 200))
    hard = encode_hard(x, bank, layout)
    soft = encode_soft(x, bank, layout, tau=1e-6)
    assert np.array_equal(hard.indices, soft.indices)


def test_encoding_idempotent():
    rng = np.random.default_rng(8)
    bank = PrototypeBank(rng.standard_normal((3, 5, 2)))
    layout = subspace_layout(6, 2)
    x = rng.standard_normal((6, 40))
    first = encode_hard(x, bank, layout)
    rebuilt = decode_hard(bank, first.indices, 6)
    second = encode_hard(rebuilt, bank, layout)
    assert np.array_equal(first.indices, second.indices)


# ---------------------------------------------------------------------------
# prototype fitting
# ---------------------------------------------------------------------------

def test_fit_degenerate_single_point():
    layout = subspace_layout(4, 2)
    v = np.array([1.5, -0.5, 2.0, 3.0])
    samples = np.tile(v[:, None], (1, 10))
    bank = fit_prototypes(samples, PQConfig(n_p=3, l_s=2), layout, seed=0)
    assert np.allclose(bank.values[0], [1.5, -0.5])
    assert np.allclose(bank.values[1], [2.0, 3.0])
    assert encoding_mse(samples, bank, layout) == 0.0


def test_fit_two_clusters_exact():
    a, b = np.array([0.0, 0.0]), np.array([4.0, 4.0])
    samples = np.stack([a, a, b, b, a, b], axis=1)
    layout = subspace_layout(2, 2)
    bank = fit_prototypes(samples, PQConfig(n_p=2, l_s=2), layout, seed=1)
    got = sorted(bank.values[0].tolist())
    assert np.allclose(got, [a.tolist(), b.tolist()])
    assert encoding_mse(samples, bank, layout) == 0.0


def test_fit_single_prototype_is_mean():
    rng = np.random.default_rng(2)
    samples = rng.standard_normal((3, 50))
    layout = subspace_layout(3, 3)
    bank = fit_prototypes(samples, PQConfig(n_p=1, l_s=3), layout, seed=0)
    assert np.allclose(bank.values[0, 0], samples.mean(axis=1), atol=1e-12)


def test_fit_warns_on_too_few_samples():
    samples = np.random.default_rng(0).standard_normal((2, 3))
    with pytest.warns(UserWarning):
        bank = fit_prototypes(samples, PQConfig(n_p=8, l_s=2),
                              subspace_layout(2, 2), seed=0)
    assert bank.n_p == 8


def test_fit_rejects_empty():
    with pytest.raises(ValueError):
        fit_prototypes(np.zeros((4, 0)), PQConfig(n_p=2, l_s=2),
                       subspace_layout(4, 2), seed=0)


def test_fit_deterministic():
    rng = np.random.default_rng(9)
    samples = rng.standard_normal((8, 64))
    layout = subspace_layout(8, 2)
    cfg = PQConfig(n_p=4, l_s=2)
    b1 = fit_prototypes(samples, cfg, layout, seed=13)
    b2 = fit_prototypes(samples, cfg, layout, seed=13)
    assert np.array_equal(b1.values, b2.values)


def test_fit_random_init_variant():
    rng = np.random.default_rng(10)
    samples = rng.standard_normal((4, 40))
    layout = subspace_layout(4, 2)
    cfg = PQConfig(n_p=3, l_s=2)
    bank = fit_prototypes(samples, cfg, layout, seed=2, init="random")
    assert bank.values.shape == (2, 3, 2)
    with pytest.raises(ValueError):
        fit_prototypes(samples, cfg, layout, seed=2, init="fancy")


def test_kmeans_monotone_over_seeds():
    rng = np.random.default_rng(0)
    points = rng.standard_normal((120, 3))
    for seed in range(20):
        _, history = kmeans_fit(points, 5, max_iters=30,
                                rng=np.random.default_rng(seed))
        assert all(b <= a + 1e-12 for a, b in zip(history, history[1:]))


# ---------------------------------------------------------------------------
# LUT construction and refit
# ---------------------------------------------------------------------------

def test_build_lut_hand_value():
    bank = PrototypeBank(np.array([[[3.0, 4.0]]]))
    lut = build_lut(np.array([[1.0, 2.0]]), bank, subspace_layout(2, 2))
    assert lut.values[0, 0, 0] == 11.0


def test_build_lut_basis_prototype_selects_weight():
    bank = PrototypeBank(np.array([[[0.0, 1.0, 0.0]]]))
    w = np.array([[5.0, -2.0, 7.0]])
    lut = build_lut(w, bank, subspace_layout(3, 3))
    assert lut.values[0, 0, 0] == -2.0


def test_build_lut_zero_weights():
    rng = np.random.default_rng(1)
    bank = PrototypeBank(rng.standard_normal((2, 3, 2)))
    lut = build_lut(np.zeros((4, 4)), bank, subspace_layout(4, 2))
    assert np.all(lut.values == 0.0)


def test_build_lut_padded_tail_is_zero_weighted():
    rng = np.random.default_rng(2)
    bank = PrototypeBank(rng.standard_normal((2, 3, 3)))
    w = rng.standard_normal((2, 5))  # pad = 1
    lut = build_lut(w, bank, subspace_layout(5, 3))
    manual = w[1, 3:5] @ bank.values[1, 2, :2]
    assert np.isclose(lut.values[1, 1, 2], manual)


def test_verify_lut_invariant():
    rng = np.random.default_rng(3)
    bank = PrototypeBank(rng.standard_normal((3, 4, 2)))
    w = rng.standard_normal((5, 6))
    lut = build_lut(w, bank, subspace_layout(6, 2))
    assert verify_lut(lut, w, bank, subspace_layout(6, 2))
    bad = LutPQ(lut.values + 1e-3)
    assert not verify_lut(bad, w, bank, subspace_layout(6, 2))


def test_refit_fixed_point():
    rng = np.random.default_rng(4)
    bank = PrototypeBank(rng.standard_normal((1, 3, 2)))
    layout = subspace_layout(2, 2)
    lut = build_lut(rng.standard_normal((4, 2)), bank, layout)
    indices = np.array([[0, 1, 2, 0, 1, 2]])
    targets = np.stack([lut.values[:, 0, i] for i in indices[0]], axis=1)
    refit = refit_lut(lut, indices, targets, ridge=0.0)
    assert np.allclose(refit.values, lut.values, atol=1e-9)


def test_refit_one_column_per_prototype():
    lut = LutPQ(np.zeros((2, 1, 3)))
    indices = np.array([[0, 1, 2]])
    targets = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
    refit = refit_lut(lut, indices, targets, ridge=0.0)
    assert np.allclose(refit.values[:, 0, :], targets)


def test_refit_matches_lstsq_oracle():
    rng = np.random.default_rng(5)
    n_p, m, c_out = 4, 40, 3
    lut = LutPQ(rng.standard_normal((c_out, 1, n_p)))
    indices = rng.integers(0, n_p, size=(1, m))
    indices[0, :n_p] = np.arange(n_p)  # every prototype occupied
    targets = rng.standard_normal((c_out, m))
    refit = refit_lut(lut, indices, targets, ridge=0.0)
    z = np.zeros((m, n_p))
    z[np.arange(m), indices[0]] = 1.0
    oracle, *_ = np.linalg.lstsq(z, targets.T, rcond=None)
    assert np.allclose(refit.values[:, 0, :], oracle.T, atol=1e-9)


def test_refit_never_worse_with_ridge():
    rng = np.random.default_rng(6)
    n_s, n_p, m, c_out = 3, 4, 60, 5
    lut = LutPQ(rng.standard_normal((c_out, n_s, n_p)))
    indices = rng.integers(0, n_p, size=(n_s, m))
    targets = rng.standard_normal((c_out, m))

    def mse(table):
        out = np.zeros((c_out, m))
        for n in range(n_s):
            out += table.values[:, n, indices[n]]
        return float(np.mean((out - targets) ** 2))

    base = mse(lut)
    for ridge in (1e-6, 1e-2, 1.0, 100.0):
        assert mse(refit_lut(lut, indices, targets, ridge=ridge)) <= base + 1e-9


def test_refit_singular_without_ridge():
    lut = LutPQ(np.zeros((1, 1, 3)))
    indices = np.array([[0, 0, 1]])  # prototype 2 never occupied
    targets = np.ones((1, 3))
    with pytest.raises(NumericError):
        refit_lut(lut, indices, targets, ridge=0.0)


# ---------------------------------------------------------------------------
# corrector
# ---------------------------------------------------------------------------

def test_corrector_zero_residuals_stay_small():
    rng = np.random.default_rng(7)
    x = rng.standard_normal((50, 6))
    r = np.zeros((50, 2))
    c = fit_corrector(x, r, hidden_dim=4, lr=1e-2, epochs=100, seed=0)
    assert np.linalg.norm(apply_corrector(c, x)) <= 1e-3


def test_corrector_learns_realizable_target():
    rng = np.random.default_rng(8)
    x = rng.standard_normal((80, 5))
    w_true = rng.standard_normal((5, 3)) * 0.3
    r = np.tanh(x) @ w_true  # realizable for a tanh MLP with enough width
    c = fit_corrector(x, r, hidden_dim=16, lr=2e-2, epochs=400, seed=1)
    initial = float(np.mean(r ** 2))
    final = float(np.mean((apply_corrector(c, x) - r) ** 2))
    assert final < 0.1 * initial


def test_corrector_full_batch_monotone():
    rng = np.random.default_rng(9)
    x = rng.standard_normal((40, 4))
    r = x @ rng.standard_normal((4, 2)) * 0.1
    c = Corrector(w1=rng.standard_normal((4, 8)) * 0.1, b1=np.zeros(8),
                  w2=rng.standard_normal((8, 2)) * 0.1, b2=np.zeros(2))
    losses = []
    for _ in range(50):
        loss, grads = corrector_loss_and_grads(c, x, r)
        losses.append(loss)
        for name in ("w1", "b1", "w2", "b2"):
            setattr(c, name, getattr(c, name) - 1e-2 * grads[name])
    assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))


def test_corrector_gradient_check():
    rng = np.random.default_rng(10)
    x = rng.standard_normal((12, 3))
    r = rng.standard_normal((12, 2))
    c = Corrector(w1=rng.standard_normal((3, 4)) * 0.5, b1=rng.standard_normal(4) * 0.1,
                  w2=rng.standard_normal((4, 2)) * 0.5, b2=rng.standard_normal(2) * 0.1)
    _, grads = corrector_loss_and_grads(c, x, r)
    eps = 1e-6
    for name in ("w1", "b1", "w2", "b2"):
        param = getattr(c, name)
        numeric = np.zeros_like(param)
        it = np.nditer(param, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = param[idx]
            param[idx] = orig + eps
            up, _ = corrector_loss_and_grads(c, x, r)
            param[idx] = orig - eps
            down, _ = corrector_loss_and_grads(c, x, r)
            param[idx] = orig
            numeric[idx] = (up - down) / (2 * eps)
        denom = max(float(np.max(np.abs(numeric))), 1e-8)
        assert np.max(np.abs(grads[name] - numeric)) / denom <= 1e-4


def test_corrector_fit_deterministic():
    rng = np.random.default_rng(11)
    x = rng.standard_normal((30, 4))
    r = rng.standard_normal((30, 2))
    kw = dict(hidden_dim=6, lr=5e-3, epochs=40, seed=3, batch_size=8)
    a = fit_corrector(x, r, **kw)
    b = fit_corrector(x, r, **kw)
    for name in ("w1", "b1", "w2", "b2"):
        assert np.array_equal(getattr(a, name), getattr(b, name))


def test_corrector_minibatch_training_reduces_loss():
    rng = np.random.default_rng(12)
    x = rng.standard_normal((64, 5))
    r = np.tanh(x) @ (rng.standard_normal((5, 2)) * 0.3)
    c = fit_corrector(x, r, hidden_dim=12, lr=1e-2, epochs=300, seed=0,
                      batch_size=16)
    final = float(np.mean((apply_corrector(c, x) - r) ** 2))
    assert final < 0.5 * float(np.mean(r ** 2))


def test_corrector_rejects_zero_hidden():
    with pytest.raises(ValueError):
        fit_corrector(np.zeros((4, 2)), np.zeros((4, 1)), hidden_dim=0)


def test_apply_corrector_rejects_bad_width():
    c = Corrector(w1=np.zeros((3, 2)), b1=np.zeros(2), w2=np.zeros((2, 1)),
                  b2=np.zeros(1))
    with pytest.raises(ShapeError):
        apply_corrector(c, np.zeros(4))
