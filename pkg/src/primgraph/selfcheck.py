"""Finite-difference gradient checks for every differentiable operation and both loss graphs.

Each check builds a small random float64 problem from a seed and returns the
relative error reported by :func:`primgraph.nn.grad_check`: per coordinate for
single operations, over the sampled gradient vector for the two full loss
graphs (whose losses are large enough that tiny components drown in round-off).
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from . import nn
from .nn import tensor as T
from .nn.tensor import Tensor

GRAD_TOLERANCE = 1e-4


def _param(rng, *shape, scale=1.0, offset=0.0) -> Tensor:
    return Tensor(rng.uniform(-scale, scale, size=shape) + offset, requires_grad=True)


def _weights(rng, *shape) -> np.ndarray:
    return rng.normal(size=shape)


def _check(f, params, seed, elementwise: bool = True) -> float:
    return nn.grad_check(f, params, seed=seed, elementwise=elementwise)


# -- elementwise and structural ops -----------------------------------------
def check_arithmetic(seed: int) -> float:
    rng = np.random.default_rng(seed)
    a, b = _param(rng, 3, 4), _param(rng, 4, scale=1.0, offset=2.5)
    w = _weights(rng, 3, 4)
    return _check(lambda: ((a + b) * (a - b) / b * w).sum(), [a, b], seed)


def check_matmul(seed: int) -> float:
    rng = np.random.default_rng(seed)
    a, b = _param(rng, 3, 5), _param(rng, 5, 2)
    w = _weights(rng, 3, 2)
    return _check(lambda: (a @ b * w).sum(), [a, b], seed)


def check_einsum(seed: int) -> float:
    rng = np.random.default_rng(seed)
    a, b = _param(rng, 2, 3, 4), _param(rng, 3, 4, 5)
    w = _weights(rng, 2, 3, 5)
    return _check(lambda: (T.einsum("nmh,mho->nmo", a, b) * w).sum(), [a, b], seed)


def check_reductions(seed: int) -> float:
    rng = np.random.default_rng(seed)
    a = _param(rng, 3, 4, 2)
    w = _weights(rng, 4)
    return _check(lambda: (a.mean(axis=(0, 2)) * w).sum() + a.sum(axis=1).sum() * 0.3, [a], seed)


def check_shapes(seed: int) -> float:
    rng = np.random.default_rng(seed)
    a, b = _param(rng, 2, 6), _param(rng, 2, 3)
    w1, w2 = _weights(rng, 3, 2), _weights(rng, 2, 2, 3)

    def f():
        r = T.transpose(a.reshape(2, 2, 3), (2, 0, 1)).reshape(3, 4)
        c = T.concat([a, b], axis=1)
        s = T.stack([b, b * b], axis=1)
        picked = T.take(c, np.array([0, 1, 1]))
        return (r[:, :2] * w1).sum() + (c * c).sum() * 0.1 + (s * w2).sum() + (picked * picked).sum()

    return _check(f, [a, b], seed)


def check_activations(seed: int) -> float:
    rng = np.random.default_rng(seed)
    a = _param(rng, 4, 5, scale=2.0)
    pos = _param(rng, 4, 5, scale=0.5, offset=1.0)
    w = _weights(rng, 4, 5)

    def f():
        out = T.relu(a) * w + T.sigmoid(a) * w + T.tanh(a) + T.exp(a * 0.5)
        return out.sum() + T.log(pos).sum() + (T.tabs(a) * w).sum()

    return _check(f, [a, pos], seed)


def check_softmax(seed: int) -> float:
    rng = np.random.default_rng(seed)
    a = _param(rng, 3, 6, scale=2.0)
    w = _weights(rng, 3, 6)
    return _check(lambda: (T.softmax(a, axis=1) * w).sum(), [a], seed)


def check_losses(seed: int) -> float:
    rng = np.random.default_rng(seed)
    logits = _param(rng, 4, 5, scale=2.0)
    pred = _param(rng, 4, 3, scale=3.0)
    target = rng.uniform(-3, 3, size=(4, 3))
    cls = rng.integers(0, 5, size=4)

    def f():
        return (nn.cross_entropy(T.softmax(logits, axis=1), cls) + nn.l1(pred, target)
                + nn.smooth_l1(pred, target))

    return _check(f, [logits, pred], seed)


def check_dense(seed: int) -> float:
    rng = np.random.default_rng(seed)
    store = nn.ParameterStore(np.float64)
    mlp = nn.MLP(store, "mlp", [5, 7, 3], rng, "tanh")
    heads = nn.MultiHeadMLP(store, "heads", 5, 4, 2, 3, rng)
    x = _param(rng, 4, 5)
    classes = rng.integers(0, 3, size=4)
    w = _weights(rng, 4, 3)
    return _check(lambda: (mlp(x) * w).sum() + (T.tabs(heads.select(x, classes))).sum(),
                  store.tensors() + [x], seed)


def check_lstm(seed: int) -> float:
    rng = np.random.default_rng(seed)
    store = nn.ParameterStore(np.float64)
    cell = nn.LSTMCell(store, "lstm", 6, 5, rng)
    h, c, x = _param(rng, 3, 5), _param(rng, 3, 5), _param(rng, 3, 6)
    w = _weights(rng, 3, 5)

    def f():
        h1, c1 = cell(h, c, x)
        h2, c2 = cell(h1, c1, x)
        return (h2 * w).sum() + (c2 * c2).sum()

    return _check(f, store.tensors() + [h, c, x], seed)


def check_conv2d(seed: int) -> float:
    rng = np.random.default_rng(seed)
    x = _param(rng, 2, 2, 7, 7)
    wt = _param(rng, 3, 2, 3, 3)
    b = _param(rng, 3)
    w = _weights(rng, 2, 3, 4, 4)
    return _check(lambda: (nn.conv2d(x, wt, b, stride=2, padding=1) * w).sum(), [x, wt, b], seed)


def check_roi_align(seed: int) -> float:
    rng = np.random.default_rng(seed)
    feats = _param(rng, 2, 3, 8, 8)
    lo = rng.uniform(0.0, 0.5, size=(2, 2))
    hi = lo + rng.uniform(0.1, 0.5, size=(2, 2))
    boxes = np.concatenate([lo, hi], axis=1)
    w = _weights(rng, 2, 3 * 4)
    return _check(lambda: (nn.roi_align(feats, boxes, 2) * w).sum(), [feats], seed)


def check_conv_encoder(seed: int) -> float:
    rng = np.random.default_rng(seed)
    store = nn.ParameterStore(np.float64)
    enc = nn.ConvEncoder(store, "enc", rng, channels=(4, 6, 8), global_dim=16)
    image = rng.uniform(0, 1.5, size=(2, 1, 16, 16))
    w1, w2 = _weights(rng, 2, 8, 2, 2), _weights(rng, 2, 16)

    def f():
        fmap, xg = enc(Tensor(image))
        return (fmap * w1).sum() + (xg * w2).sum()

    return _check(f, store.tensors(), seed)


# -- model components -------------------------------------------------------
def _desk_model(seed: int, image_size: int = 16):
    from .model import ModelConfig, PrimitiveGraphModel
    cfg = ModelConfig(m_c=6, d_h=64, d_z=96, image_size=image_size)
    return PrimitiveGraphModel(cfg, seed=seed, dtype=np.float64)


def _reasoning_inputs(rng, cfg, n: int):
    h = rng.uniform(-1, 1, size=(n, cfg.d_h))
    s = rng.dirichlet(np.ones(cfg.m_c), size=n)
    p = rng.normal(size=(n, 9))
    return h, s, p


def check_node_embed(seed: int) -> float:
    model = _desk_model(seed)
    rng = np.random.default_rng(seed + 1000)
    h, s, p = _reasoning_inputs(rng, model.cfg, 6)
    w = _weights(rng, 6, model.cfg.d_z)
    r = model.reasoning
    return _check(lambda: (r.node_embed(h, s, p) * w).sum(), model.store.tensors("reasoning.g_"), seed)


def check_message_pass(seed: int) -> float:
    from .model.reasoning import message_pass
    rng = np.random.default_rng(seed)
    z = _param(rng, 6, 9)
    u, v, wm = (_param(rng, 9, 9, scale=0.5) for _ in range(3))
    w = _weights(rng, 6, 9)
    return _check(lambda: (message_pass(z, u, v, wm) * w).sum(), [z, u, v, wm], seed)


def check_loss_reasoning(seed: int) -> float:
    """Full stage-2 graph over 2n_p = 6 proposals at desk sizes."""
    from .training import loss_reasoning
    model = _desk_model(seed)
    rng = np.random.default_rng(seed + 2000)
    h, s, p = _reasoning_inputs(rng, model.cfg, 6)
    gt_labels = np.tile(rng.integers(1, model.cfg.m_c + 1, size=2), 2)
    gt_params = np.tile(rng.normal(size=(2, 9)), (2, 1))
    params = model.store.tensors("reasoning.")
    return _check(lambda: loss_reasoning(model.reasoning(h, s, p), gt_labels, gt_params), params, seed,
                  elementwise=False)


def check_loss_proposal(seed: int) -> float:
    """Full teacher-forced stage-1 graph (encoder, both generators, count head) for n_p = 3."""
    from .training import BatchTargets, SequenceTargets, loss_count, loss_proposal
    model = _desk_model(seed)
    cfg = model.cfg
    rng = np.random.default_rng(seed + 3000)
    image = rng.uniform(0, 1.5, size=(1, 1, cfg.image_size, cfg.image_size))
    lo = rng.uniform(0.05, 0.5, size=(3, 2))
    seq = SequenceTargets(labels=rng.integers(1, cfg.m_c + 1, size=3), params=rng.normal(size=(3, 9)),
                          boxes=np.concatenate([lo, lo + rng.uniform(0.1, 0.4, size=(3, 2))], axis=1))
    targets = {"bottom_up": BatchTargets.pad([seq]), "top_down": BatchTargets.pad([seq.reversed()])}
    net = model.proposal

    def f():
        fmap, xg = net.encode(Tensor(image))
        outputs = {d: net.generators[d].teacher_forced(xg, fmap, targets[d].classes, targets[d].params,
                                                       targets[d].boxes) for d in targets}
        return loss_proposal(outputs, targets) + loss_count(net.count_raw(xg), np.array([3]))

    return _check(f, model.store.tensors("proposal."), seed, elementwise=False)


CHECKS: dict[str, dict[str, Callable[[int], float]]] = {
    "nn": {
        "arithmetic": check_arithmetic,
        "matmul": check_matmul,
        "einsum": check_einsum,
        "reductions": check_reductions,
        "shapes": check_shapes,
        "activations": check_activations,
        "softmax": check_softmax,
        "losses": check_losses,
        "dense": check_dense,
        "lstm": check_lstm,
        "conv2d": check_conv2d,
        "conv_encoder": check_conv_encoder,
        "roi_align": check_roi_align,
    },
    "model": {
        "node_embed": check_node_embed,
        "message_pass": check_message_pass,
    },
    "training": {
        "loss_proposal": check_loss_proposal,
        "loss_reasoning": check_loss_reasoning,
    },
}


def run_checks(modules=None, seeds=range(10)) -> list[tuple[str, int, float]]:
    """(name, seed, error) for every selected check and seed."""
    results = []
    for module in modules or CHECKS:
        for name, check in CHECKS[module].items():
            for seed in seeds:
                results.append((f"{module}.{name}", seed, check(seed)))
    return results
