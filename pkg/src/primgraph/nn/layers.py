"""Layer set used by the proposal and reasoning networks."""

from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import tensor as T
from .optim import ParameterStore
from .tensor import Tensor, _result

ACTIVATIONS = ("none", "relu", "softmax", "tanh", "sigmoid")


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def activate(x: Tensor, activation: str) -> Tensor:
    if activation == "none":
        return x
    if activation == "relu":
        return T.relu(x)
    if activation == "softmax":
        return T.softmax(x, axis=-1)
    if activation == "tanh":
        return T.tanh(x)
    if activation == "sigmoid":
        return T.sigmoid(x)
    raise ValueError(f"unknown activation {activation!r}")


def dense_forward(x: Tensor, weight: Tensor, bias: Tensor | None, activation: str = "none") -> Tensor:
    """``act(x @ weight + bias)`` for ``x`` of shape (B, in) and ``weight`` of shape (in, out)."""
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[0]:
        raise ValueError(f"dense shape mismatch: x {x.shape}, weight {weight.shape}")
    y = x @ weight
    if bias is not None:
        if bias.shape != (weight.shape[1],):
            raise ValueError(f"bias shape {bias.shape} does not match {weight.shape[1]} outputs")
        y = y + bias
    return activate(y, activation)


class Dense:
    def __init__(self, store: ParameterStore, name: str, n_in: int, n_out: int,
                 rng: np.random.Generator, activation: str = "none"):
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.weight = store.add(f"{name}.weight", uniform_init(rng, (n_in, n_out), n_in))
        self.bias = store.add(f"{name}.bias", uniform_init(rng, (n_out,), n_in))
        self.activation = activation

    def __call__(self, x: Tensor) -> Tensor:
        return dense_forward(x, self.weight, self.bias, self.activation)


class MLP:
    """Stack of dense layers with ReLU between them and ``out_activation`` at the end."""

    def __init__(self, store: ParameterStore, name: str, sizes: list[int],
                 rng: np.random.Generator, out_activation: str = "none"):
        self.layers = []
        for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
            last = i == len(sizes) - 2
            self.layers.append(Dense(store, f"{name}.{i}", a, b, rng, out_activation if last else "relu"))

    def __call__(self, x: Tensor) -> Tensor:
        for layer in self.layers:
            x = layer(x)
        return x


class MultiHeadMLP:
    """One two-layer MLP per class, evaluated for all classes at once.

    ``__call__`` returns (N, heads, out); ``select`` reduces to (N, out) with a
    one-hot (N, heads) choice.
    """

    def __init__(self, store: ParameterStore, name: str, n_in: int, hidden: int, n_out: int,
                 heads: int, rng: np.random.Generator):
        self.heads, self.hidden = heads, hidden
        self.w1 = store.add(f"{name}.w1", uniform_init(rng, (n_in, heads * hidden), n_in))
        self.b1 = store.add(f"{name}.b1", uniform_init(rng, (heads * hidden,), n_in))
        self.w2 = store.add(f"{name}.w2", uniform_init(rng, (heads, hidden, n_out), hidden))
        self.b2 = store.add(f"{name}.b2", uniform_init(rng, (heads, n_out), hidden))

    def __call__(self, x: Tensor) -> Tensor:
        n = x.shape[0]
        hidden = T.relu(x @ self.w1 + self.b1).reshape(n, self.heads, self.hidden)
        return T.einsum("nmh,mho->nmo", hidden, self.w2) + self.b2

    def select(self, x: Tensor, classes: np.ndarray) -> Tensor:
        out = self(x)
        onehot = np.zeros((x.shape[0], self.heads, 1), dtype=x.dtype)
        onehot[np.arange(x.shape[0]), np.asarray(classes, dtype=int), 0] = 1.0
        return (out * onehot).sum(axis=1)


class LSTMCell:
    """Standard LSTM cell with fused gate matrices in the order (i, f, g, o)."""

    def __init__(self, store: ParameterStore, name: str, n_in: int, n_hidden: int,
                 rng: np.random.Generator, forget_bias: float = 1.0):
        self.n_in, self.n_hidden = n_in, n_hidden
        self.w_x = store.add(f"{name}.w_x", uniform_init(rng, (n_in, 4 * n_hidden), n_hidden))
        self.w_h = store.add(f"{name}.w_h", uniform_init(rng, (n_hidden, 4 * n_hidden), n_hidden))
        bias = uniform_init(rng, (4 * n_hidden,), n_hidden)
        bias[n_hidden : 2 * n_hidden] = forget_bias
        self.bias = store.add(f"{name}.bias", bias)

    def __call__(self, h: Tensor, c: Tensor, x: Tensor) -> tuple[Tensor, Tensor]:
        return lstm_cell(h, c, x, self.w_x, self.w_h, self.bias)


def lstm_cell(h: Tensor, c: Tensor, x: Tensor, w_x: Tensor, w_h: Tensor, bias: Tensor) -> tuple[Tensor, Tensor]:
    d = h.shape[1]
    if c.shape != h.shape or x.shape[0] != h.shape[0]:
        raise ValueError(f"lstm state/input mismatch: h {h.shape}, c {c.shape}, x {x.shape}")
    if w_x.shape != (x.shape[1], 4 * d) or w_h.shape != (d, 4 * d):
        raise ValueError(f"lstm weight mismatch: w_x {w_x.shape}, w_h {w_h.shape}")
    gates = x @ w_x + h @ w_h + bias
    i = T.sigmoid(gates[:, 0:d])
    f = T.sigmoid(gates[:, d : 2 * d])
    g = T.tanh(gates[:, 2 * d : 3 * d])
    o = T.sigmoid(gates[:, 3 * d : 4 * d])
    c_next = f * c + i * g
    h_next = o * T.tanh(c_next)
    return h_next, c_next


# ---------------------------------------------------------------------------
# convolution
# ---------------------------------------------------------------------------
def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation of (B, Cin, H, W) input with (Cout, Cin, k, k) filters via im2col."""
    b, cin, h, w = x.shape
    cout, cin_w, k, k2 = weight.shape
    if cin != cin_w or k != k2:
        raise ValueError(f"conv2d shape mismatch: x {x.shape}, weight {weight.shape}")
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    windows = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    ho, wo = windows.shape[2], windows.shape[3]
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(b * ho * wo, cin * k * k)
    wmat = weight.data.reshape(cout, -1)
    out = cols @ wmat.T
    if bias is not None:
        out = out + bias.data
    out = out.reshape(b, ho, wo, cout).transpose(0, 3, 1, 2)

    def backward(g):
        g2 = g.transpose(0, 2, 3, 1).reshape(-1, cout)
        dw = (g2.T @ cols).reshape(weight.shape)
        db = g2.sum(axis=0) if bias is not None else None
        dcols = (g2 @ wmat).reshape(b, ho, wo, cin, k, k)
        dxp = np.zeros_like(xp)
        for i in range(k):
            for j in range(k):
                dxp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += (
                    dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
                )
        dx = dxp[:, :, padding : padding + h, padding : padding + w]
        return (dx, dw, db)

    parents = (x, weight, bias) if bias is not None else (x, weight)
    return _result(np.ascontiguousarray(out), parents, backward)


class ConvEncoder:
    """Three stride-2 conv+ReLU blocks, then global average pooling and a dense layer.

    Returns the final feature map (B, C, H/8, W/8) and a 256-d global feature.
    """

    def __init__(self, store: ParameterStore, name: str, rng: np.random.Generator,
                 channels: tuple[int, int, int] = (16, 32, 32), global_dim: int = 256):
        self.convs = []
        cin = 1
        for i, cout in enumerate(channels):
            fan_in = cin * 9
            wt = store.add(f"{name}.conv{i}.weight", uniform_init(rng, (cout, cin, 3, 3), fan_in))
            bs = store.add(f"{name}.conv{i}.bias", uniform_init(rng, (cout,), fan_in))
            self.convs.append((wt, bs))
            cin = cout
        self.head = Dense(store, f"{name}.global", cin, global_dim, rng, "relu")

    def __call__(self, images: Tensor) -> tuple[Tensor, Tensor]:
        if images.ndim == 3:
            images = images.reshape(images.shape[0], 1, *images.shape[1:])
        h, w = images.shape[2], images.shape[3]
        if h % 8 or w % 8:
            raise ValueError(f"image size {h}x{w} is not divisible by 8")
        x = images
        for wt, bs in self.convs:
            x = T.relu(conv2d(x, wt, bs, stride=2, padding=1))
        pooled = x.mean(axis=(2, 3))
        return x, self.head(pooled)


# ---------------------------------------------------------------------------
# region-aligned pooling
# ---------------------------------------------------------------------------
MIN_BOX_SIZE = 1e-3


def _sanitize_box(box) -> np.ndarray:
    box = np.asarray(box, dtype=np.float64)
    if not np.all(np.isfinite(box)):
        raise ValueError(f"non-finite ROI box {box}")
    x0, y0, x1, y1 = box
    out = []
    for lo, hi in ((x0, x1), (y0, y1)):
        lo, hi = min(lo, hi), max(lo, hi)
        if hi - lo < MIN_BOX_SIZE:
            mid = 0.5 * (lo + hi)
            lo, hi = mid - MIN_BOX_SIZE / 2, mid + MIN_BOX_SIZE / 2
        out.append((lo, hi))
    return np.array([out[0][0], out[1][0], out[0][1], out[1][1]])


def _interp_matrix(lo: float, hi: float, k: int, size: int) -> np.ndarray:
    """(k, size) bilinear weights for k cell-centre samples inside [lo, hi] (normalized)."""
    centers = lo + (np.arange(k) + 0.5) * (hi - lo) / k
    pos = np.clip(centers * size, 0.0, size - 1)
    low = np.minimum(np.floor(pos).astype(int), size - 1)
    high = np.minimum(low + 1, size - 1)
    frac = pos - low
    mat = np.zeros((k, size))
    rows = np.arange(k)
    np.add.at(mat, (rows, low), 1.0 - frac)
    np.add.at(mat, (rows, high), frac)
    return mat


def roi_align(features: Tensor, boxes, output_size: int) -> Tensor:
    """Bilinear ROI pooling.

    ``features`` is (C, Hf, Wf) with one box, or (B, C, Hf, Wf) with (B, 4) boxes.
    Boxes are (x0, y0, x1, y1) in normalized image coordinates; samples sit at
    the centres of a k x k grid inside the box and feature cell j spans
    [j, j+1) in feature-map units. Returns (C*k*k,) or (B, C*k*k); gradients
    flow to ``features`` only.
    """
    single = features.ndim == 3
    boxes = np.asarray(boxes, dtype=np.float64)
    if single:
        features = features.reshape(1, *features.shape)
        boxes = boxes.reshape(1, 4)
    b, c, hf, wf = features.shape
    k = output_size
    ay = np.empty((b, k, hf))
    ax = np.empty((b, k, wf))
    for n in range(b):
        x0, y0, x1, y1 = _sanitize_box(boxes[n])
        ay[n] = _interp_matrix(y0, y1, k, hf)
        ax[n] = _interp_matrix(x0, x1, k, wf)
    ay = ay.astype(features.dtype)
    ax = ax.astype(features.dtype)
    out = np.einsum("bky,bcyx,blx->bckl", ay, features.data, ax, optimize=True)

    def backward(g):
        g = g.reshape(b, c, k, k)
        return (np.einsum("bky,bckl,blx->bcyx", ay, g, ax, optimize=True),)

    result = _result(out.reshape(b, c * k * k), (features,), backward)
    return result.reshape(c * k * k) if single else result
