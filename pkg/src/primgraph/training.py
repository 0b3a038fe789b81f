"""Stage-wise training: normalization, the two losses, schedules and the training loops."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Callable

import numpy as np

from . import nn
from .matching import greedy_match
from .model.config import ModelConfig
from .model.pipeline import PrimitiveGraphModel, prepare_image
from .model.proposal import DIRECTIONS, Proposal, StepOutput
from .model.reasoning import ReasoningOutput
from .nn import tensor as T
from .nn.losses import PROB_EPS
from .nn.tensor import Tensor
from .normalization import NormalizationStats
from .synthdata.dataset import DatasetSample

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# normalization and targets
# ---------------------------------------------------------------------------
def compute_stats(samples: list[DatasetSample]) -> NormalizationStats:
    """Mean and population std over every folded training primitive."""
    params = [s.primitives[i].params for s in samples for i in s.folded]
    if not params:
        raise ValueError("cannot compute statistics on an empty split")
    return NormalizationStats.fit(np.array(params))


@dataclass
class SequenceTargets:
    labels: np.ndarray      # (N,) one-based semantic labels
    params: np.ndarray      # (N, 9) normalized parameters
    boxes: np.ndarray       # (N, 4)

    def __len__(self) -> int:
        return len(self.labels)

    def reversed(self) -> "SequenceTargets":
        return SequenceTargets(self.labels[::-1].copy(), self.params[::-1].copy(), self.boxes[::-1].copy())


def canonical_targets(sample: DatasetSample, stats: NormalizationStats | None = None) -> dict[str, SequenceTargets]:
    """Folded targets sorted by centre height (bottom-up) and the reversed top-down sequence."""
    stats = stats or NormalizationStats.identity()
    idx = list(sample.folded)
    bottom_up = SequenceTargets(
        labels=np.array([sample.labels[i] for i in idx], dtype=int),
        params=np.array([stats.normalize(sample.primitives[i].params) for i in idx]).reshape(-1, 9),
        boxes=np.asarray(sample.boxes, dtype=np.float64)[idx].reshape(-1, 4),
    )
    return {"bottom_up": bottom_up, "top_down": bottom_up.reversed()}


def doubled_ground_truth(sample: DatasetSample, stats: NormalizationStats) -> tuple[np.ndarray, np.ndarray]:
    """Folded targets listed twice, one copy per generator direction: (labels, params)."""
    t = canonical_targets(sample, stats)["bottom_up"]
    return np.concatenate([t.labels, t.labels]), np.concatenate([t.params, t.params])


@dataclass
class BatchTargets:
    """Padded per-direction targets for a batch; ``mask`` marks real steps."""

    classes: np.ndarray     # (B, T) zero-based
    params: np.ndarray      # (B, T, 9)
    boxes: np.ndarray       # (B, T, 4)
    mask: np.ndarray        # (B, T)

    @classmethod
    def pad(cls, seqs: list[SequenceTargets]) -> "BatchTargets":
        steps = max(len(s) for s in seqs)
        b = len(seqs)
        out = cls(np.zeros((b, steps), dtype=int), np.zeros((b, steps, 9)), np.zeros((b, steps, 4)),
                  np.zeros((b, steps)))
        for n, s in enumerate(seqs):
            k = len(s)
            out.classes[n, :k] = s.labels - 1
            out.params[n, :k] = s.params
            out.boxes[n, :k] = s.boxes
            out.mask[n, :k] = 1.0
            # padding repeats the last real step so teacher forcing never sees junk boxes
            out.classes[n, k:] = s.labels[-1] - 1
            out.params[n, k:] = s.params[-1]
            out.boxes[n, k:] = s.boxes[-1]
        return out


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------
def _masked_ce(prob: Tensor, target: np.ndarray, weight: np.ndarray) -> Tensor:
    picked = prob[np.arange(prob.shape[0]), target]
    return (-T.log(picked, eps=PROB_EPS) * weight.astype(prob.dtype)).sum()


def _masked_l1(pred: Tensor, target: np.ndarray, weight: np.ndarray) -> Tensor:
    diff = T.tabs(pred - target.astype(pred.dtype))
    return (diff * weight.astype(pred.dtype)[:, None]).sum()


def _masked_smooth_l1(pred: Tensor, target: np.ndarray, weight: np.ndarray) -> Tensor:
    diff = T.smooth_l1(pred - target.astype(pred.dtype), 1.0)
    return (diff * weight.astype(pred.dtype)[:, None]).sum()


def loss_proposal(outputs: dict[str, list[StepOutput]], targets: dict[str, BatchTargets],
                  lambda_rp: float = 10.0, lambda_rb: float = 10.0) -> Tensor:
    """CE on labels + lambda_rp * L1 on parameters + lambda_rb * smooth-L1 on boxes.

    Summed over the real steps of both directions, averaged over the batch.
    The CE term is dropped in agnostic mode where no label head exists.
    """
    total = None
    batch = None
    for direction in DIRECTIONS:
        outs, tgt = outputs[direction], targets[direction]
        if len(outs) != tgt.classes.shape[1]:
            raise ValueError(f"{direction}: {len(outs)} generated steps for {tgt.classes.shape[1]} targets")
        batch = tgt.classes.shape[0]
        for i, out in enumerate(outs):
            w = tgt.mask[:, i]
            if not w.any():
                continue
            term = lambda_rp * _masked_l1(out.p, tgt.params[:, i], w) \
                + lambda_rb * _masked_smooth_l1(out.b, tgt.boxes[:, i], w)
            if out.s is not None:
                term = term + _masked_ce(out.s, tgt.classes[:, i], w)
            total = term if total is None else total + term
    if total is None:
        raise ValueError("no target steps")
    return total * (1.0 / batch)


def loss_count(raw: Tensor, n_o: np.ndarray) -> Tensor:
    """Batch-mean L1 between regressed and true folded counts."""
    return T.tabs(raw - np.asarray(n_o, dtype=raw.dtype)).sum() * (1.0 / raw.shape[0])


def foreground_labels(probs: np.ndarray) -> np.ndarray:
    """Most likely non-background class for each row (1..M_c)."""
    return np.argmax(probs[:, 1:], axis=1) + 1


def loss_reasoning(out: ReasoningOutput, gt_labels: np.ndarray, gt_params: np.ndarray,
                   lambda_rp: float = 10.0) -> Tensor:
    """Greedy-matched CE + lambda_rp * L1; unmatched predictions only pay CE toward background.

    Matching compares each prediction's geometry from its most likely
    foreground head with the doubled ground truth. The geometry loss reads the
    head of the matched ground-truth class.
    """
    n = out.probs.shape[0]
    fg = foreground_labels(out.probs.data)
    candidates = out.select(fg).data.astype(np.float64)
    assignment = greedy_match(candidates, gt_params)
    target = np.zeros(n, dtype=int)
    heads = np.zeros(n, dtype=int)
    geo_target = np.zeros((n, 9))
    geo_weight = np.zeros(n)
    for i, j in assignment.pairs:
        target[i] = gt_labels[j]
        heads[i] = gt_labels[j]
        geo_target[i] = gt_params[j]
        geo_weight[i] = 1.0
    ce = _masked_ce(out.probs, target, np.ones(n))
    if not assignment.pairs:
        return ce
    return ce + lambda_rp * _masked_l1(out.select(heads), geo_target, geo_weight)


# ---------------------------------------------------------------------------
# schedules
# ---------------------------------------------------------------------------
@dataclass
class TrainSchedule:
    stage1_epochs: int = 20
    stage2_epochs: int = 20
    batch_size: int = 16
    lr: float = 1e-4
    beta1: float = 0.95
    beta2: float = 0.999
    lambda_rp: float = 10.0
    lambda_rb: float = 10.0
    seed: int = 0
    grad_clip: float = 5.0
    preset: str = "full"

    def __post_init__(self):
        if self.stage1_epochs < 1 or self.stage2_epochs < 1:
            raise ConfigError("epochs must be positive")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be positive")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if self.preset not in ("desk", "full"):
            raise ConfigError(f"unknown preset {self.preset!r}")

    @classmethod
    def desk(cls, **overrides) -> "TrainSchedule":
        base = dict(stage1_epochs=60, stage2_epochs=40, batch_size=8, lr=3e-4, preset="desk")
        base.update(overrides)
        return cls(**base)

    def model_config(self, m_c: int) -> ModelConfig:
        return ModelConfig.full(m_c) if self.preset == "full" else ModelConfig.desk(m_c)

    @classmethod
    def from_text(cls, text: str) -> "TrainSchedule":
        """Parse ``key = value`` lines; ``#`` starts a comment. Unknown keys are errors.

        Keys that are not given fall back to the defaults of the chosen
        ``preset`` (``full`` unless the file says otherwise).
        """
        kinds = {f.name: f.type for f in fields(cls)}
        values: dict = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected key = value")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in kinds:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            try:
                if kinds[key] in ("int", int):
                    values[key] = int(value)
                elif kinds[key] in ("float", float):
                    values[key] = float(value)
                else:
                    values[key] = value
            except ValueError as exc:
                raise ConfigError(f"line {lineno}: bad value for {key}: {value!r}") from exc
        if values.get("preset", "full") == "desk":
            return cls.desk(**values)
        return cls(**values)

    def to_text(self) -> str:
        return "".join(f"{f.name} = {getattr(self, f.name)}\n" for f in fields(self))

    @classmethod
    def load(cls, path) -> "TrainSchedule":
        return cls.from_text(Path(path).read_text())


@dataclass
class TrainLog:
    epoch_losses: list[float] = field(default_factory=list)     # main loss (L_p or L_r)
    epoch_count_losses: list[float] = field(default_factory=list)


def _epoch_batches(n: int, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    order = rng.permutation(n)
    return [order[k:k + batch_size] for k in range(0, n, batch_size)]


def _optimizer_step(model: PrimitiveGraphModel, state: nn.AdamState, names: list[str], clip: float) -> None:
    tensors = [model.store[n] for n in names]
    for t in tensors:
        if t.grad is None:
            t.grad = np.zeros_like(t.data)
    nn.clip_grad_norm(tensors, clip)
    nn.adam_step(model.store, state, names)


def _sample_m_c(samples: list[DatasetSample]) -> int:
    from .synthdata.templates import get_template
    return get_template(samples[0].category).m_c


def build_model(samples: list[DatasetSample], schedule: TrainSchedule, agnostic: bool = False,
                dtype=np.float32) -> PrimitiveGraphModel:
    stats = compute_stats(samples).as_float32()
    cfg = schedule.model_config(1 if agnostic else _sample_m_c(samples))
    return PrimitiveGraphModel(cfg, seed=schedule.seed, dtype=dtype, stats=stats)


def stage1_batch_loss(model: PrimitiveGraphModel, batch: list[DatasetSample],
                      schedule: TrainSchedule) -> tuple[Tensor, Tensor]:
    """Teacher-forced proposal loss and count loss for one batch."""
    images = np.stack([prepare_image(s.depth, model.dtype) for s in batch])[:, None]
    fmap, xg = model.proposal.encode(Tensor(images))
    agnostic = model.cfg.agnostic
    seqs = {d: [] for d in DIRECTIONS}
    for s in batch:
        for d, t in canonical_targets(s, model.stats).items():
            if agnostic:
                t = SequenceTargets(np.ones_like(t.labels), t.params, t.boxes)
            seqs[d].append(t)
    targets = {d: BatchTargets.pad(seqs[d]) for d in DIRECTIONS}
    outputs = {
        d: model.proposal.generators[d].teacher_forced(
            xg, fmap, targets[d].classes, targets[d].params.astype(model.dtype), targets[d].boxes)
        for d in DIRECTIONS
    }
    lp = loss_proposal(outputs, targets, schedule.lambda_rp, schedule.lambda_rb)
    lc = loss_count(model.proposal.count_raw(xg), np.array([s.n_o for s in batch]))
    return lp, lc


def train_stage1(model: PrimitiveGraphModel, samples: list[DatasetSample], schedule: TrainSchedule,
                 progress: Callable[[int, float], None] | None = None) -> TrainLog:
    """Train encoder, count regressor and both generators jointly."""
    names = model.store.names("proposal.")
    model.store.set_trainable("proposal.", True)
    model.store.set_trainable("reasoning.", False)
    state = nn.AdamState(lr=schedule.lr, beta1=schedule.beta1, beta2=schedule.beta2)
    rng = np.random.default_rng(schedule.seed)
    out = TrainLog()
    for epoch in range(schedule.stage1_epochs):
        lp_sum = lc_sum = 0.0
        batches = _epoch_batches(len(samples), schedule.batch_size, rng)
        for idx in batches:
            batch = [samples[i] for i in idx]
            model.store.zero_grad()
            lp, lc = stage1_batch_loss(model, batch, schedule)
            (lp + lc).backward()
            _optimizer_step(model, state, names, schedule.grad_clip)
            lp_sum += float(lp.data) * len(idx)
            lc_sum += float(lc.data) * len(idx)
        out.epoch_losses.append(lp_sum / len(samples))
        out.epoch_count_losses.append(lc_sum / len(samples))
        log.info("stage1 epoch %d  L_p %.4f  L_count %.4f", epoch + 1, out.epoch_losses[-1],
                 out.epoch_count_losses[-1])
        if progress:
            progress(epoch + 1, out.epoch_losses[-1])
    model.store.set_trainable("reasoning.", True)
    return out


def cached_proposals(model: PrimitiveGraphModel, samples: list[DatasetSample],
                     batch_size: int = 25) -> list[list[Proposal]]:
    """Free-running proposals of the (frozen) proposal network for every sample."""
    out: list[list[Proposal]] = []
    for k in range(0, len(samples), batch_size):
        props, _ = model.propose_batch([s.depth for s in samples[k:k + batch_size]])
        out.extend(props)
    return out


def stage2_sample_loss(model: PrimitiveGraphModel, proposals: list[Proposal], sample: DatasetSample,
                       schedule: TrainSchedule) -> Tensor:
    h = np.stack([q.h for q in proposals])
    s = np.stack([q.s for q in proposals])
    p = np.stack([q.p for q in proposals])
    out = model.reasoning(h, s, p)
    labels, params = doubled_ground_truth(sample, model.stats)
    if model.cfg.agnostic:
        labels = np.ones_like(labels)
    return loss_reasoning(out, labels, params, schedule.lambda_rp)


def train_stage2(model: PrimitiveGraphModel, samples: list[DatasetSample], schedule: TrainSchedule,
                 proposals: list[list[Proposal]] | None = None,
                 progress: Callable[[int, float], None] | None = None) -> TrainLog:
    """Train the reasoning network on frozen free-running proposals."""
    names = model.store.names("reasoning.")
    model.store.set_trainable("proposal.", False)
    if proposals is None:
        proposals = cached_proposals(model, samples)
    state = nn.AdamState(lr=schedule.lr, beta1=schedule.beta1, beta2=schedule.beta2)
    rng = np.random.default_rng(schedule.seed)
    out = TrainLog()
    for epoch in range(schedule.stage2_epochs):
        total = 0.0
        for idx in _epoch_batches(len(samples), schedule.batch_size, rng):
            model.store.zero_grad()
            loss = None
            for i in idx:
                term = stage2_sample_loss(model, proposals[i], samples[i], schedule)
                loss = term if loss is None else loss + term
            loss = loss * (1.0 / len(idx))
            loss.backward()
            _optimizer_step(model, state, names, schedule.grad_clip)
            total += float(loss.data) * len(idx)
        out.epoch_losses.append(total / len(samples))
        log.info("stage2 epoch %d  L_r %.4f", epoch + 1, out.epoch_losses[-1])
        if progress:
            progress(epoch + 1, out.epoch_losses[-1])
    model.store.set_trainable("proposal.", True)
    return out

