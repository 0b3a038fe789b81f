"""Primitive proposal network: conv encoder, count regressor and two recurrent generators."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import nn
from ..nn import tensor as T
from ..nn.tensor import Tensor
from .config import ModelConfig

DIRECTIONS = ("bottom_up", "top_down")


@dataclass
class Proposal:
    p: np.ndarray          # normalized primitive parameters (9,)
    s: np.ndarray          # label distribution over M_c classes
    h: np.ndarray          # generator hidden state (D_h,)
    b: np.ndarray          # 2D box (x0, y0, x1, y1), normalized image coordinates
    direction: str

    @property
    def label(self) -> int:
        return int(np.argmax(self.s)) + 1


@dataclass
class StepOutput:
    s: Tensor | None       # (B, M_c) probabilities; None in agnostic mode
    b: Tensor              # (B, 4)
    p: Tensor              # (B, 9)
    h: Tensor              # (B, D_h)


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def clamp_count(raw: float, n_max: int) -> int:
    return max(1, min(n_max, round_half_up(raw)))


def sanitize_box(box: np.ndarray) -> np.ndarray:
    """Order corners, clip into the unit square and enforce a minimum extent."""
    b = np.clip(np.asarray(box, dtype=np.float64), 0.0, 1.0)
    x0, x1 = sorted((b[0], b[2]))
    y0, y1 = sorted((b[1], b[3]))
    return np.array([x0, y0, x1, y1])


def one_hot(classes, width: int, dtype) -> np.ndarray:
    classes = np.asarray(classes, dtype=int)
    out = np.zeros((len(classes), width), dtype=dtype)
    out[np.arange(len(classes)), classes] = 1.0
    return out


class SequenceGenerator:
    """Two-layer LSTM emitting one primitive proposal per step.

    ``h_1 = f_h(x^g)``; each step reads out ``s = f_s(h)``, ``b = f_b(h)`` and
    ``p = f_p(h, class)`` with one geometry MLP per class, then advances the
    LSTM on ``[x^g; roi(b); b; s; p]``.
    """

    def __init__(self, store: nn.ParameterStore, name: str, cfg: ModelConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.f_h = nn.MLP(store, f"{name}.f_h", [cfg.global_dim, cfg.head_hidden, 2 * cfg.d_h], rng, "tanh")
        self.lstm1 = nn.LSTMCell(store, f"{name}.lstm1", cfg.lstm_input_dim, cfg.d_h, rng)
        self.lstm2 = nn.LSTMCell(store, f"{name}.lstm2", cfg.d_h, cfg.d_h, rng)
        self.f_s = None if cfg.agnostic else nn.Dense(store, f"{name}.f_s", cfg.d_h, cfg.m_c, rng, "softmax")
        self.f_b = nn.MLP(store, f"{name}.f_b", [cfg.d_h, cfg.head_hidden, 4], rng)
        self.f_p = nn.MultiHeadMLP(store, f"{name}.f_p", cfg.d_h, cfg.head_hidden, 9, cfg.m_c, rng)

    def initial_state(self, xg: Tensor):
        d = self.cfg.d_h
        h0 = self.f_h(xg)
        zeros = Tensor(np.zeros((xg.shape[0], d), dtype=xg.dtype))
        return [h0[:, :d], zeros, h0[:, d:], zeros]

    def advance(self, state, xg: Tensor, fmap: Tensor, boxes: np.ndarray, s_in: np.ndarray,
                p_in) -> list:
        v = nn.roi_align(fmap, boxes, self.cfg.roi_size)
        dtype = xg.dtype
        parts = [xg, v, Tensor(np.asarray(boxes, dtype=dtype)), Tensor(np.asarray(s_in, dtype=dtype)),
                 p_in if isinstance(p_in, Tensor) else Tensor(np.asarray(p_in, dtype=dtype))]
        x = T.concat(parts, axis=1)
        h1, c1, h2, c2 = state
        h1, c1 = self.lstm1(h1, c1, x)
        h2, c2 = self.lstm2(h2, c2, h1)
        return [h1, c1, h2, c2]

    def readout(self, h: Tensor, classes: np.ndarray | None) -> StepOutput:
        s = self.f_s(h) if self.f_s is not None else None
        if classes is None:
            classes = np.zeros(h.shape[0], dtype=int) if s is None else np.argmax(s.data, axis=1)
        return StepOutput(s=s, b=self.f_b(h), p=self.f_p.select(h, classes), h=h)

    def teacher_forced(self, xg: Tensor, fmap: Tensor, classes: np.ndarray, params: np.ndarray,
                       boxes: np.ndarray) -> list[StepOutput]:
        """Run ``T`` steps feeding ground-truth (class, params, box) of step i into step i+1.

        ``classes`` is (B, T) zero-based, ``params`` (B, T, 9), ``boxes`` (B, T, 4).
        """
        steps = classes.shape[1]
        state = self.initial_state(xg)
        outputs = []
        for i in range(steps):
            outputs.append(self.readout(state[2], classes[:, i]))
            if i + 1 < steps:
                s_in = one_hot(classes[:, i], self.cfg.m_c, xg.dtype)
                state = self.advance(state, xg, fmap, boxes[:, i], s_in, params[:, i])
        return outputs

    def free_running(self, xg: Tensor, fmap: Tensor, steps: int) -> list[StepOutput]:
        """Run ``steps`` steps feeding the generator its own argmax class, params and box."""
        if steps < 1:
            raise ValueError("need at least one step")
        state = self.initial_state(xg)
        outputs = []
        for i in range(steps):
            out = self.readout(state[2], None)
            outputs.append(out)
            if i + 1 < steps:
                if out.s is None:
                    s_in = np.ones((xg.shape[0], 1), dtype=xg.dtype)
                else:
                    s_in = one_hot(np.argmax(out.s.data, axis=1), self.cfg.m_c, xg.dtype)
                boxes = np.stack([sanitize_box(b) for b in out.b.data])
                state = self.advance(state, xg, fmap, boxes, s_in, out.p.detach())
        return outputs


class ProposalNetwork:
    def __init__(self, store: nn.ParameterStore, cfg: ModelConfig, rng: np.random.Generator,
                 prefix: str = "proposal"):
        self.cfg = cfg
        self.encoder = nn.ConvEncoder(store, f"{prefix}.encoder", rng, cfg.channels, cfg.global_dim)
        self.count_head = nn.MLP(store, f"{prefix}.count", [cfg.global_dim, cfg.head_hidden, 1], rng)
        self.generators = {
            "bottom_up": SequenceGenerator(store, f"{prefix}.gen_bu", cfg, rng),
            "top_down": SequenceGenerator(store, f"{prefix}.gen_td", cfg, rng),
        }

    def encode(self, images) -> tuple[Tensor, Tensor]:
        if not isinstance(images, Tensor):
            images = Tensor(np.asarray(images))
        if images.ndim == 2:
            images = images.reshape(1, 1, *images.shape)
        return self.encoder(images)

    def count_raw(self, xg: Tensor) -> Tensor:
        return self.count_head(xg).reshape(xg.shape[0])

    def count_primitives(self, xg: Tensor) -> list[tuple[float, int]]:
        raw = self.count_raw(xg).data
        return [(float(r), clamp_count(float(r), self.cfg.n_max)) for r in raw]

    def generate_sequence(self, fmap: Tensor, xg: Tensor, n_p: int, direction: str) -> list[Proposal]:
        """Free-running proposals for a single image (batch of one)."""
        if n_p < 1:
            raise ValueError("n_p must be at least 1")
        return self._collect(self.generators[direction].free_running(xg, fmap, n_p), [n_p], direction)[0]

    def _collect(self, outputs: list[StepOutput], counts: list[int], direction: str) -> list[list[Proposal]]:
        per_sample: list[list[Proposal]] = [[] for _ in counts]
        for step, out in enumerate(outputs):
            for n, count in enumerate(counts):
                if step >= count:
                    continue
                s = np.ones(1) if out.s is None else out.s.data[n].astype(np.float64)
                per_sample[n].append(Proposal(
                    p=out.p.data[n].astype(np.float64),
                    s=s,
                    h=out.h.data[n].astype(np.float64),
                    b=sanitize_box(out.b.data[n]),
                    direction=direction,
                ))
        return per_sample

    def propose_batch(self, images) -> tuple[list[list[Proposal]], list[tuple[float, int]]]:
        """Union of both directional sequences per image, plus (raw, n_p) counts."""
        fmap, xg = self.encode(images)
        counts = self.count_primitives(xg)
        n_ps = [n for _, n in counts]
        result: list[list[Proposal]] = [[] for _ in n_ps]
        for direction in DIRECTIONS:
            outputs = self.generators[direction].free_running(xg, fmap, max(n_ps))
            for n, props in enumerate(self._collect(outputs, n_ps, direction)):
                result[n].extend(props)
        return result, counts

    def propose(self, image) -> list[Proposal]:
        return self.propose_batch(np.asarray(image)[None])[0][0]
