from __future__ import annotations

import numpy as np
import pytest

import oracles
from primgraph.nn import (
    AdamState,
    CheckpointError,
    ConvEncoder,
    ParameterStore,
    Tensor,
    adam_step,
    clip_grad_norm,
    conv2d,
    cross_entropy,
    dense_forward,
    grad_check,
    l1,
    load_checkpoint,
    loss_terms,
    lstm_cell,
    roi_align,
    save_checkpoint,
    smooth_l1,
    softmax,
)
from primgraph.nn import tensor as T
from primgraph.selfcheck import CHECKS


def _t(a, grad=True):
    return Tensor(np.array(a, dtype=np.float64), requires_grad=grad)


def test_dense_examples(rng):
    x = _t(rng.normal(size=(3, 4)))
    zero = dense_forward(x, _t(np.zeros((4, 5))), _t(np.zeros(5)), "relu")
    assert np.array_equal(zero.data, np.zeros((3, 5)))
    same = dense_forward(x, _t(np.eye(4)), None, "none")
    assert np.array_equal(same.data, x.data)
    with pytest.raises(ValueError):
        dense_forward(x, _t(np.zeros((5, 4))), None)


def test_dense_relu_gradient(rng):
    x = _t(rng.normal(size=(3, 4)))
    w = _t(rng.normal(size=(4, 5)))
    b = _t(rng.normal(size=5))
    assert grad_check(lambda: dense_forward(x, w, b, "relu").sum(), [x, w, b], elementwise=True) < 1e-6


def test_lstm_closed_forms(rng):
    d, n_in = 3, 4
    c = rng.normal(size=(2, d))
    h = rng.normal(size=(2, d))
    x = rng.normal(size=(2, n_in))
    zeros = (_t(np.zeros((n_in, 4 * d))), _t(np.zeros((d, 4 * d))), _t(np.zeros(4 * d)))
    h2, c2 = lstm_cell(_t(h), _t(c), _t(x), *zeros)
    np.testing.assert_allclose(c2.data, 0.5 * c, atol=1e-15)
    np.testing.assert_allclose(h2.data, 0.5 * np.tanh(0.5 * c), atol=1e-15)
    w = (_t(rng.normal(size=(n_in, 4 * d))), _t(rng.normal(size=(d, 4 * d))), _t(rng.normal(size=4 * d)))
    h3, _ = lstm_cell(_t(np.zeros((2, d))), _t(np.zeros((2, d))), _t(np.zeros((2, n_in))), w[0], w[1], _t(np.zeros(4 * d)))
    assert np.array_equal(h3.data, np.zeros((2, d)))


def test_lstm_matches_oracle_and_gradients(rng):
    d, n_in = 3, 5
    h, c, x = (_t(rng.normal(size=s)) for s in [(2, d), (2, d), (2, n_in)])
    w_x, w_h, b = _t(rng.normal(size=(n_in, 4 * d))), _t(rng.normal(size=(d, 4 * d))), _t(rng.normal(size=4 * d))
    h2, c2 = lstm_cell(h, c, x, w_x, w_h, b)
    eh, ec = oracles.lstm(h.data, c.data, x.data, w_x.data, w_h.data, b.data)
    np.testing.assert_allclose(h2.data, eh, atol=1e-14)
    np.testing.assert_allclose(c2.data, ec, atol=1e-14)

    def f():
        hh, cc = lstm_cell(h, c, x, w_x, w_h, b)
        return (hh * hh).sum() + cc.sum()

    assert grad_check(f, [h, c, x, w_x, w_h, b], elementwise=True) < 1e-6
    with pytest.raises(ValueError):
        lstm_cell(h, c, x, w_h, w_h, b)


def test_conv2d_matches_oracle(rng):
    x = rng.normal(size=(2, 3, 8, 8))
    w = rng.normal(size=(4, 3, 3, 3))
    b = rng.normal(size=4)
    for stride, pad in ((1, 0), (2, 1), (1, 1)):
        got = conv2d(_t(x), _t(w), _t(b), stride=stride, padding=pad).data
        np.testing.assert_allclose(got, oracles.conv2d(x, w, b, stride, pad), atol=1e-12)


def test_conv_encoder_shapes_and_zero(rng):
    store = ParameterStore(np.float64)
    enc = ConvEncoder(store, "enc", rng, channels=(8, 16, 32))
    fmap, glob = enc(_t(rng.normal(size=(1, 64, 64)), grad=False))
    assert fmap.shape == (1, 32, 8, 8) and glob.shape == (1, 256)
    for name in store.names("enc"):
        if name.endswith("bias"):
            store[name].data[...] = 0.0
    fmap, glob = enc(_t(np.zeros((1, 64, 64)), grad=False))
    assert not fmap.data.any() and not glob.data.any()
    with pytest.raises(ValueError):
        enc(_t(np.zeros((1, 60, 64)), grad=False))


def test_roi_align_constant_and_oracle(rng):
    const = _t(np.full((2, 5, 7), 3.25), grad=False)
    out = roi_align(const, (0.13, 0.2, 0.71, 0.9), 3)
    np.testing.assert_allclose(out.data, 3.25, atol=1e-14)
    feat = rng.normal(size=(3, 4, 4))
    whole = roi_align(_t(feat), (0, 0, 1, 1), 4).data
    np.testing.assert_allclose(whole, oracles.roi_align(feat, (0, 0, 1, 1), 4), atol=1e-14)
    # samples sit half a cell past each integer position
    np.testing.assert_allclose(whole.reshape(3, 4, 4)[0, 0, 0], feat[0, :2, :2].mean(), atol=1e-14)
    for _ in range(10):
        x0, x1 = np.sort(rng.uniform(size=2))
        y0, y1 = np.sort(rng.uniform(size=2))
        got = roi_align(_t(feat), (x0, y0, x1, y1), 3).data
        np.testing.assert_allclose(got, oracles.roi_align(feat, (x0, y0, x1, y1), 3), atol=1e-12)
    with pytest.raises(ValueError):
        roi_align(_t(feat), (0, np.nan, 1, 1), 2)


def test_roi_align_degenerate_box(rng):
    feat = _t(rng.normal(size=(2, 4, 4)))
    out = roi_align(feat, (0.5, 0.5, 0.5, 0.5), 2)
    assert np.all(np.isfinite(out.data))


def test_loss_examples(rng):
    p = _t([0.0, 1.0, 0.0])
    assert cross_entropy(p, 1).item() <= 1e-6
    assert cross_entropy(_t([0.25, 0.75]), 0).item() == pytest.approx(np.log(4))
    with pytest.raises(ValueError):
        cross_entropy(p, 3)
    with pytest.raises(ValueError):
        cross_entropy(p, 1.0)
    x = _t(rng.normal(size=5))
    assert l1(x, x.data).item() == 0.0
    assert smooth_l1(_t([0.5, -0.5]), [0.0, 0.0]).item() == pytest.approx(0.25)
    assert smooth_l1(_t([2.0]), [0.0]).item() == pytest.approx(1.5)
    assert loss_terms("smooth_l1", _t([0.5]), [0.0]).item() == 0.125
    with pytest.raises(ValueError):
        loss_terms("hinge", x, x.data)


def test_softmax_sums_to_one(rng):
    s = softmax(_t(rng.normal(scale=30, size=(20, 7))))
    np.testing.assert_allclose(s.data.sum(axis=-1), 1.0, atol=1e-12)
    assert np.all(s.data >= 0)


def test_broadcast_and_reduction_gradients(rng):
    a = _t(rng.normal(size=(3, 4)))
    b = _t(rng.normal(size=(4,)))
    c = _t(rng.uniform(1, 2, size=(3, 1)))
    f = lambda: ((a * b + c) / c - T.exp(a * 0.1)).mean(axis=0).sum() + T.log(c).sum()  # noqa: E731
    assert grad_check(f, [a, b, c], elementwise=True) < 1e-6


def test_grad_check_quadratic_and_detects_wrong_gradient(rng):
    x = _t(rng.normal(size=6))
    a = rng.normal(size=6)
    assert grad_check(lambda: (x * x * a).sum(), [x], elementwise=True) < 1e-9

    def wrong(v):
        # forward is v^2, backward claims 3v
        return T._result(v.data ** 2, (v,), lambda g: (3 * g * v.data,))

    assert grad_check(lambda: wrong(x).sum(), [x]) > 0.1
    assert grad_check(lambda: wrong(x).sum(), [x], elementwise=True) > 0.1


@pytest.mark.parametrize("name", sorted(CHECKS["nn"]))
def test_selfcheck_nn_ops(name):
    for seed in range(3):
        assert CHECKS["nn"][name](seed) < 1e-5


def test_adam_closed_form_steps():
    store = ParameterStore(np.float64)
    p = store.add("w", np.array([1.0, -2.0, 0.5]))
    state = AdamState(lr=0.1)
    g = np.array([0.3, -4.0, 1e-3])
    p.grad = g.copy()
    adam_step(store, state)
    np.testing.assert_allclose(p.data, [1.0, -2.0, 0.5] - 0.1 * g / (np.abs(g) + 1e-8), rtol=1e-12)
    assert p.grad is None
    p.grad = g.copy()
    adam_step(store, state)
    m = 0.95 * (0.05 * g) + 0.05 * g
    v = 0.999 * (0.001 * g * g) + 0.001 * g * g
    step2 = 0.1 * (m / (1 - 0.95**2)) / (np.sqrt(v / (1 - 0.999**2)) + 1e-8)
    first = np.array([1.0, -2.0, 0.5]) - 0.1 * g / (np.abs(g) + 1e-8)
    np.testing.assert_allclose(p.data, first - step2, rtol=1e-12)


def test_adam_zero_gradient_and_missing_grad():
    store = ParameterStore(np.float64)
    p = store.add("w", np.array([1.0, 2.0]))
    p.grad = np.zeros(2)
    adam_step(store, AdamState())
    assert np.array_equal(p.data, [1.0, 2.0])
    with pytest.raises(ValueError):
        adam_step(store, AdamState())


def test_adam_deterministic(rng):
    init = rng.normal(size=(4, 3))
    grads = [rng.normal(size=(4, 3)) for _ in range(5)]
    results = []
    for _ in range(2):
        store = ParameterStore(np.float32)
        p = store.add("w", init)
        state = AdamState(lr=1e-2)
        for g in grads:
            p.grad = g.astype(np.float32)
            adam_step(store, state)
        results.append(p.data.tobytes())
    assert results[0] == results[1]


def test_clip_grad_norm():
    a, b = _t([3.0]), _t([4.0])
    a.grad, b.grad = np.array([3.0]), np.array([4.0])
    assert clip_grad_norm([a, b], 1.0) == pytest.approx(5.0)
    assert np.hypot(a.grad[0], b.grad[0]) == pytest.approx(1.0)


def test_parameter_store_rules():
    store = ParameterStore()
    store.add("a.w", np.zeros(2))
    store.add("b.w", np.zeros(3))
    assert list(store) == ["a.w", "b.w"]
    with pytest.raises(KeyError):
        store.add("a.w", np.zeros(2))
    store.set_trainable("a.", False)
    assert not store["a.w"].requires_grad and store["b.w"].requires_grad
    with pytest.raises(ValueError):
        store.load_state_dict({"a.w": np.zeros(5)})


def test_checkpoint_round_trip(tmp_path, rng):
    tensors = {
        "enc.conv0.weight": rng.normal(size=(4, 1, 3, 3)).astype(np.float32),
        "scalar": np.array(np.float32(2.5)),
        "ünï": rng.normal(size=7).astype(np.float32),
        "empty": np.zeros((0, 3), dtype=np.float32),
    }
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, tensors)
    blob = path.read_bytes()
    assert blob[:4] == b"PGN1"
    back = load_checkpoint(path)
    assert list(back) == list(tensors)
    for k in tensors:
        assert back[k].shape == tensors[k].shape
        assert back[k].tobytes() == tensors[k].tobytes()
    save_checkpoint(tmp_path / "again.ckpt", back)
    assert (tmp_path / "again.ckpt").read_bytes() == blob


def test_checkpoint_errors(tmp_path, rng):
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, {"w": rng.normal(size=(3, 3)).astype(np.float32)})
    blob = path.read_bytes()
    for cut in (2, 6, 12, len(blob) - 1):
        (tmp_path / "cut.ckpt").write_bytes(blob[:cut])
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / "cut.ckpt")
    (tmp_path / "bad.ckpt").write_bytes(b"XXXX" + blob[4:])
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "bad.ckpt")
    (tmp_path / "long.ckpt").write_bytes(blob + b"\0")
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "long.ckpt")
