"""Input unrolling, prototype fitting, hard/soft encoding, dot-product
table construction, and the optional distance-driven output corrector.

The encode path mirrors what the lookup hardware does: split each unrolled
input column into subspaces, find the nearest prototype per subspace, and
(in the soft variant used for analysis) blend prototypes with a
temperature softmax over negated distances so that tau -> 0 converges to
the hard assignment.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .core import (
    LayerKind,
    LayerSpec,
    Metric,
    NumericError,
    PQConfig,
    ShapeError,
    SubspaceLayout,
    out_hw,
)

_COL_CHUNK = 4096  # bound for (cols, n_p, l_s) distance broadcasts


@dataclass(frozen=True)
class PrototypeBank:
    """Per-subspace prototype tables, indexed [subspace][prototype][element]."""

    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 3:
            raise ShapeError("prototype bank must be (n_s, n_p, l_s)")
        if not np.isfinite(v).all():
            raise ValueError("prototype bank contains non-finite values")
        object.__setattr__(self, "values", v)

    @property
    def n_s(self) -> int:
        return self.values.shape[0]

    @property
    def n_p(self) -> int:
        return self.values.shape[1]

    @property
    def l_s(self) -> int:
        return self.values.shape[2]


@dataclass(frozen=True)
class LutPQ:
    """Precomputed dot products, indexed [out_channel][subspace][prototype]."""

    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 3:
            raise ShapeError("LUT must be (c_out, n_s, n_p)")
        if not np.isfinite(v).all():
            raise ValueError("LUT contains non-finite values")
        object.__setattr__(self, "values", v)

    @property
    def c_out(self) -> int:
        return self.values.shape[0]

    @property
    def n_s(self) -> int:
        return self.values.shape[1]

    @property
    def n_p(self) -> int:
        return self.values.shape[2]


@dataclass(frozen=True)
class EncodingResult:
    """Outcome of encoding an unrolled input.

    ``indices`` is (n_s, cols) for the hard path. ``soft_matrix``, when
    present, has the same shape as the unrolled input it encodes.
    ``distances`` is (n_s, cols, n_p) when kept.
    """

    indices: np.ndarray
    soft_matrix: np.ndarray | None = None
    distances: np.ndarray | None = None


@dataclass
class Corrector:
    """Two-layer perceptron mapping the n_s*n_p distances of one column to
    an additive correction of length c_out. Hidden activation is tanh."""

    w1: np.ndarray  # (d_in, hidden)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (hidden, c_out)
    b2: np.ndarray  # (c_out,)

    def __post_init__(self) -> None:
        for arr in (self.w1, self.b1, self.w2, self.b2):
            if not np.isfinite(arr).all():
                raise ValueError("corrector parameters must be finite")
        if self.hidden_dim < 1:
            raise ValueError("hidden_dim must be >= 1")

    @property
    def d_in(self) -> int:
        return self.w1.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def c_out(self) -> int:
        return self.w2.shape[1]


# ---------------------------------------------------------------------------
# im2col unrolling
# ---------------------------------------------------------------------------

def _same_pad(size: int, k: int, stride: int) -> int:
    """Leading pad under same-padding (total pad split low/high)."""
    out = -(-size // stride)
    total = max((out - 1) * stride + k - size, 0)
    return total // 2


def unroll_im2col(x: np.ndarray, layer: LayerSpec) -> np.ndarray:
    """Unroll a (c_in, H, W) tensor into the (A, cols) im2col matrix.

    Column j holds the zero-padded receptive field of output position j;
    rows are ordered (kernel-row, kernel-col, channel).
    """
    if layer.groups != 1:
        raise ShapeError(f"layer {layer.name!r}: im2col unrolling requires groups == 1")
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (layer.c_in, layer.in_h, layer.in_w):
        raise ShapeError(
            f"layer {layer.name!r}: input shape {x.shape} does not match "
            f"({layer.c_in}, {layer.in_h}, {layer.in_w})")
    kh, kw, s = layer.k_h, layer.k_w, layer.stride
    oh, ow = out_hw(layer)
    pt = _same_pad(layer.in_h, kh, s)
    pl = _same_pad(layer.in_w, kw, s)

    padded = np.zeros((layer.c_in, layer.in_h + kh, layer.in_w + kw))
    padded[:, pt:pt + layer.in_h, pl:pl + layer.in_w] = x
    out = np.empty((kh, kw, layer.c_in, oh * ow))
    for i in range(kh):
        for j in range(kw):
            patch = padded[:, i:i + oh * s:s, j:j + ow * s:s]
            out[i, j] = patch.reshape(layer.c_in, -1)
    return out.reshape(kh * kw * layer.c_in, oh * ow)


def unroll_weights(w: np.ndarray, layer: LayerSpec) -> np.ndarray:
    """Unroll (c_out, c_in, k_h, k_w) weights to (c_out, A), row order
    matching :func:`unroll_im2col`. Linear weights pass through."""
    w = np.asarray(w, dtype=np.float64)
    if layer.kind is LayerKind.LINEAR:
        if w.shape != (layer.c_out, layer.c_in):
            raise ShapeError(f"layer {layer.name!r}: bad linear weight shape {w.shape}")
        return w
    if layer.groups != 1:
        raise ShapeError(f"layer {layer.name!r}: weight unrolling requires groups == 1")
    if w.shape != (layer.c_out, layer.c_in, layer.k_h, layer.k_w):
        raise ShapeError(f"layer {layer.name!r}: bad weight shape {w.shape}")
    return w.transpose(0, 2, 3, 1).reshape(layer.c_out, -1)


def pad_to_subspaces(x_unrolled: np.ndarray, layout: SubspaceLayout,
                     l_s: int) -> np.ndarray:
    """Reshape (A, cols) to (n_s, l_s, cols), zero-filling the padded tail."""
    x_unrolled = np.asarray(x_unrolled, dtype=np.float64)
    if x_unrolled.ndim != 2:
        raise ShapeError("unrolled input must be 2-D")
    a, cols = x_unrolled.shape
    full = layout.n_s * l_s
    if a == full:
        padded = x_unrolled
    elif a == full - layout.pad:
        padded = np.zeros((full, cols))
        padded[:a] = x_unrolled
    else:
        raise ShapeError(f"input rows {a} do not match layout ({full - layout.pad} or {full})")
    return padded.reshape(layout.n_s, l_s, cols)


# ---------------------------------------------------------------------------
# Distances and encoding
# ---------------------------------------------------------------------------

def compute_distances(x_sub: np.ndarray, bank: PrototypeBank, n: int,
                      metric: Metric = Metric.L2_SQUARED) -> np.ndarray:
    """Distances from one sub-vector to every prototype of subspace ``n``.

    L2 is the squared distance (no square root is ever taken); L1 is the
    absolute-difference sum. Only the ranking matters downstream.
    """
    x_sub = np.asarray(x_sub, dtype=np.float64)
    if x_sub.shape != (bank.l_s,):
        raise ShapeError(f"sub-vector length {x_sub.shape} != l_s {bank.l_s}")
    diff = x_sub[None, :] - bank.values[n]
    if Metric(metric) is Metric.L2_SQUARED:
        return np.sum(diff * diff, axis=1)
    return np.sum(np.abs(diff), axis=1)


def _distance_table(x_sub: np.ndarray, protos: np.ndarray, metric: Metric) -> np.ndarray:
    """Distances for one subspace: (cols, l_s) x (n_p, l_s) -> (cols, n_p)."""
    out = np.empty((x_sub.shape[0], protos.shape[0]))
    for lo in range(0, x_sub.shape[0], _COL_CHUNK):
        chunk = x_sub[lo:lo + _COL_CHUNK]
        diff = chunk[:, None, :] - protos[None, :, :]
        if metric is Metric.L2_SQUARED:
            out[lo:lo + _COL_CHUNK] = np.sum(diff * diff, axis=2)
        else:
            out[lo:lo + _COL_CHUNK] = np.sum(np.abs(diff), axis=2)
    return out


def _all_distances(x_unrolled: np.ndarray, bank: PrototypeBank,
                   layout: SubspaceLayout, metric: Metric) -> np.ndarray:
    sub = pad_to_subspaces(x_unrolled, layout, bank.l_s)
    dists = np.empty((bank.n_s, sub.shape[2], bank.n_p))
    for n in range(bank.n_s):
        dists[n] = _distance_table(sub[n].T, bank.values[n], metric)
    return dists


def encode_hard(x_unrolled: np.ndarray, bank: PrototypeBank,
                layout: SubspaceLayout, metric: Metric = Metric.L2_SQUARED,
                keep_distances: bool = False) -> EncodingResult:
    """Nearest-prototype assignment per (subspace, column).

    Ties are broken toward the lowest prototype index, so results are
    deterministic and order-independent.
    """
    dists = _all_distances(x_unrolled, bank, layout, Metric(metric))
    indices = np.argmin(dists, axis=2)
    return EncodingResult(indices=indices,
                          distances=dists if keep_distances else None)


def encode_soft(x_unrolled: np.ndarray, bank: PrototypeBank,
                layout: SubspaceLayout, metric: Metric = Metric.L2_SQUARED,
                tau: float = 1.0) -> EncodingResult:
    """Temperature-softmax blend of prototypes per (subspace, column).

    Weights are softmax(-d/tau): the sign is flipped relative to a naive
    softmax over distances so that tau -> 0 selects the closest prototype,
    making the soft path converge to :func:`encode_hard`.
    """
    if not tau > 0:
        raise ValueError("tau must be > 0")
    x_unrolled = np.asarray(x_unrolled, dtype=np.float64)
    a = x_unrolled.shape[0]
    dists = _all_distances(x_unrolled, bank, layout, Metric(metric))
    logits = -dists / tau
    logits -= logits.max(axis=2, keepdims=True)
    w = np.exp(logits)
    w /= w.sum(axis=2, keepdims=True)
    # (n_s, cols, n_p) @ (n_s, n_p, l_s) -> (n_s, cols, l_s)
    blended = np.einsum("ncp,npl->ncl", w, bank.values)
    soft = blended.transpose(0, 2, 1).reshape(bank.n_s * bank.l_s, -1)[:a]
    return EncodingResult(indices=np.argmax(w, axis=2), soft_matrix=soft,
                          distances=dists)


def decode_hard(bank: PrototypeBank, indices: np.ndarray, a: int) -> np.ndarray:
    """Rebuild the (a, cols) matrix selected by hard indices."""
    picked = bank.values[np.arange(bank.n_s)[:, None], indices]  # (n_s, cols, l_s)
    return picked.transpose(0, 2, 1).reshape(bank.n_s * bank.l_s, -1)[:a]


# ---------------------------------------------------------------------------
# Prototype fitting (per-subspace Lloyd k-means, k-means++ seeding)
# ---------------------------------------------------------------------------

def kmeans_fit(points: np.ndarray, k: int, *, max_iters: int = 25,
               rng: np.random.Generator, init: str = "kmeans++",
               ) -> tuple[np.ndarray, list[float]]:
    """Lloyd's k-means, seeded by k-means++ (default) or uniform sampling.

    Returns (centroids (k, dim), per-iteration mean squared distance).
    The history is non-increasing: assignments and centroid updates each
    only lower the objective, and empty clusters keep their centroid.
    """
    if init not in ("kmeans++", "random"):
        raise ValueError(f"unknown init {init!r}")
    points = np.asarray(points, dtype=np.float64)
    m, dim = points.shape
    centroids = np.empty((k, dim))
    if m < k:
        warnings.warn(
            f"only {m} samples for {k} centroids; surplus centroids are "
            "perturbed copies", stacklevel=2)
        base = points[rng.integers(0, m, size=k)]
        centroids = base + 1e-6 * rng.standard_normal((k, dim))
        centroids[:m] = points
    elif init == "random":
        centroids[:] = points[rng.choice(m, size=k, replace=False)]
    else:
        # k-means++ seeding
        centroids[0] = points[rng.integers(0, m)]
        d2 = np.sum((points - centroids[0]) ** 2, axis=1)
        for i in range(1, k):
            total = d2.sum()
            if total <= 0:
                centroids[i:] = centroids[0]
                break
            probs = d2 / total
            centroids[i] = points[rng.choice(m, p=probs)]
            d2 = np.minimum(d2, np.sum((points - centroids[i]) ** 2, axis=1))

    history: list[float] = []
    assign = np.zeros(m, dtype=np.int64)
    for _ in range(max_iters):
        dists = _distance_table(points, centroids, Metric.L2_SQUARED)
        assign = np.argmin(dists, axis=1)
        history.append(float(dists[np.arange(m), assign].mean() / dim))
        moved = False
        for c in range(k):
            members = points[assign == c]
            if len(members) == 0:
                continue  # empty cluster keeps its centroid (monotone objective)
            new = members.mean(axis=0)
            if not np.array_equal(new, centroids[c]):
                centroids[c] = new
                moved = True
        if not moved:
            break
    return centroids, history


def fit_prototypes(sample_columns: np.ndarray, config: PQConfig,
                   layout: SubspaceLayout, *, max_iters: int = 25,
                   seed: int = 0, init: str = "kmeans++") -> PrototypeBank:
    """Fit one prototype bank per subspace by k-means over the sample
    sub-vectors. Deterministic given the seed."""
    sample_columns = np.asarray(sample_columns, dtype=np.float64)
    if sample_columns.ndim != 2 or sample_columns.shape[1] == 0:
        raise ValueError("sample_columns must be a non-empty (A, M) matrix")
    sub = pad_to_subspaces(sample_columns, layout, config.l_s)
    rng = np.random.default_rng(seed)
    bank = np.empty((layout.n_s, config.n_p, config.l_s))
    for n in range(layout.n_s):
        bank[n], _ = kmeans_fit(sub[n].T, config.n_p, max_iters=max_iters,
                                rng=rng, init=init)
    return PrototypeBank(values=bank)


def encoding_mse(x_unrolled: np.ndarray, bank: PrototypeBank,
                 layout: SubspaceLayout,
                 metric: Metric = Metric.L2_SQUARED) -> float:
    """Mean squared error of the hard-encoded input vs. the input."""
    x_unrolled = np.asarray(x_unrolled, dtype=np.float64)
    enc = encode_hard(x_unrolled, bank, layout, metric)
    rebuilt = decode_hard(bank, enc.indices, x_unrolled.shape[0])
    return float(np.mean((rebuilt - x_unrolled) ** 2))


# ---------------------------------------------------------------------------
# LUT construction and refit
# ---------------------------------------------------------------------------

def build_lut(weights_unrolled: np.ndarray, bank: PrototypeBank,
              layout: SubspaceLayout) -> LutPQ:
    """Dot product of every weight sub-row with every prototype.

    Weight rows shorter than n_s*l_s are zero-padded, matching the input
    padding, so the padded tail never contributes.
    """
    w = np.asarray(weights_unrolled, dtype=np.float64)
    if w.ndim != 2:
        raise ShapeError("weights must be (c_out, A)")
    c_out, a = w.shape
    full = layout.n_s * bank.l_s
    if a == full - layout.pad:
        wp = np.zeros((c_out, full))
        wp[:, :a] = w
    elif a == full:
        wp = w
    else:
        raise ShapeError(f"weight row length {a} does not match layout")
    w_sub = wp.reshape(c_out, layout.n_s, bank.l_s)
    values = np.einsum("onl,npl->onp", w_sub, bank.values)
    return LutPQ(values=values)


def verify_lut(lut: LutPQ, weights_unrolled: np.ndarray, bank: PrototypeBank,
               layout: SubspaceLayout, rtol: float = 1e-9) -> bool:
    """Check the construction invariant lut[o][n][p] == dot(w_sub, proto)."""
    rebuilt = build_lut(weights_unrolled, bank, layout)
    return bool(np.allclose(lut.values, rebuilt.values, rtol=rtol, atol=0.0))


def refit_lut(lut: LutPQ, indices: np.ndarray, target_outputs: np.ndarray,
              ridge: float = 0.0) -> LutPQ:
    """Re-solve LUT entries per output channel against target outputs.

    Each column contributes a one-hot occupancy feature per subspace; the
    fit is ridge regression with the penalty on the *deviation from the
    current entries*, so the fitting-set output MSE never increases for
    any ridge >= 0 (and ridge=0 is plain least squares).
    """
    if ridge < 0:
        raise ValueError("ridge must be >= 0")
    indices = np.asarray(indices)
    targets = np.asarray(target_outputs, dtype=np.float64)
    n_s, m = indices.shape
    c_out = targets.shape[0]
    if n_s != lut.n_s or c_out != lut.c_out or targets.shape[1] != m:
        raise ShapeError("indices/targets do not match the LUT")

    d = n_s * lut.n_p
    z = np.zeros((m, d))
    cols = indices.T + np.arange(n_s)[None, :] * lut.n_p
    z[np.arange(m)[:, None], cols] = 1.0

    gram = z.T @ z
    w_old = lut.values.transpose(1, 2, 0).reshape(d, c_out)
    rhs = z.T @ targets.T
    if ridge == 0.0:
        if np.linalg.matrix_rank(gram) < d:
            raise NumericError(
                "normal equations are singular (unoccupied or dependent "
                "occupancy features); use ridge > 0")
        w_new = np.linalg.solve(gram, rhs)
    else:
        # solve for the deviation: (G + ridge I) delta = Z^T (y - Z w_old)
        delta = np.linalg.solve(gram + ridge * np.eye(d), rhs - gram @ w_old)
        w_new = w_old + delta
    return LutPQ(values=w_new.reshape(n_s, lut.n_p, c_out).transpose(2, 0, 1))


# ---------------------------------------------------------------------------
# Corrector (2-layer perceptron on distance features)
# ---------------------------------------------------------------------------

def distances_to_features(distances: np.ndarray) -> np.ndarray:
    """Flatten (n_s, cols, n_p) distances to per-column features
    (cols, n_s*n_p), subspace-major."""
    n_s, cols, n_p = distances.shape
    return distances.transpose(1, 0, 2).reshape(cols, n_s * n_p)


def _corrector_forward(c: Corrector, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    h = np.tanh(x @ c.w1 + c.b1)
    return h, h @ c.w2 + c.b2


def corrector_loss_and_grads(c: Corrector, x: np.ndarray, r: np.ndarray,
                             ) -> tuple[float, dict[str, np.ndarray]]:
    """Mean squared error against residual targets plus its analytic
    gradients (used by training and by finite-difference checks)."""
    h, out = _corrector_forward(c, x)
    err = out - r
    loss = float(np.mean(err ** 2))
    g = 2.0 * err / err.size
    gw2 = h.T @ g
    gb2 = g.sum(axis=0)
    gh = (g @ c.w2.T) * (1.0 - h ** 2)
    gw1 = x.T @ gh
    gb1 = gh.sum(axis=0)
    return loss, {"w1": gw1, "b1": gb1, "w2": gw2, "b2": gb2}


def apply_corrector(corrector: Corrector, distances: np.ndarray) -> np.ndarray:
    """Forward pass: (d_in,) -> (c_out,) or (m, d_in) -> (m, c_out)."""
    x = np.asarray(distances, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[1] != corrector.d_in:
        raise ShapeError(f"corrector expects width {corrector.d_in}, got {x.shape[1]}")
    _, out = _corrector_forward(corrector, x)
    return out[0] if single else out


def fit_corrector(distances: np.ndarray, residuals: np.ndarray,
                  hidden_dim: int, *, lr: float = 1e-2, epochs: int = 200,
                  seed: int = 0, batch_size: int | None = None) -> Corrector:
    """Train the corrector by mini-batch gradient descent with manually
    derived gradients (no momentum).

    The output layer starts at zero, so the initial correction is exactly
    zero; the returned parameters are the best epoch measured on the full
    fitting set, which therefore never fits worse than no corrector.
    """
    if hidden_dim < 1:
        raise ValueError("hidden_dim must be >= 1")
    x = np.asarray(distances, dtype=np.float64)
    r = np.asarray(residuals, dtype=np.float64)
    if x.ndim != 2 or r.ndim != 2 or x.shape[0] != r.shape[0]:
        raise ShapeError("distances (m, d_in) and residuals (m, c_out) must align")
    m, d_in = x.shape
    rng = np.random.default_rng(seed)
    c = Corrector(
        w1=rng.standard_normal((d_in, hidden_dim)) / np.sqrt(d_in),
        b1=np.zeros(hidden_dim),
        w2=np.zeros((hidden_dim, r.shape[1])),
        b2=np.zeros(r.shape[1]),
    )
    if batch_size is None or batch_size >= m:
        batch_size = m

    def full_loss() -> float:
        loss, _ = corrector_loss_and_grads(c, x, r)
        return loss

    best = {"loss": full_loss(), "params": (c.w1.copy(), c.b1.copy(),
                                            c.w2.copy(), c.b2.copy())}
    for _ in range(epochs):
        order = rng.permutation(m) if batch_size < m else np.arange(m)
        for lo in range(0, m, batch_size):
            sel = order[lo:lo + batch_size]
            _, grads = corrector_loss_and_grads(c, x[sel], r[sel])
            c.w1 -= lr * grads["w1"]
            c.b1 -= lr * grads["b1"]
            c.w2 -= lr * grads["w2"]
            c.b2 -= lr * grads["b2"]
        loss = full_loss()
        if loss < best["loss"]:
            best = {"loss": loss, "params": (c.w1.copy(), c.b1.copy(),
                                             c.w2.copy(), c.b2.copy())}
    c.w1, c.b1, c.w2, c.b2 = best["params"]
    return c
