"""Full two-stage model: proposals, graph reasoning and shape prediction."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .. import nn
from ..geometry import TAU_SYM, Primitive
from ..matching import pairing_nms
from ..metrics import ShapeSet
from ..normalization import NormalizationStats
from ..synthdata.camera import DEFAULT_RADIUS
from ..synthdata.dataset import unfold
from .config import ModelConfig
from .proposal import Proposal, ProposalNetwork
from .reasoning import FinalPrediction, ReasoningNetwork

MIN_LENGTH = 1e-3


class ModelLoadError(RuntimeError):
    pass


def prepare_image(depth: np.ndarray, dtype=np.float32) -> np.ndarray:
    """Scale raw depth by the fixed 1/radius factor the encoder expects."""
    return (np.asarray(depth, dtype=np.float64) / DEFAULT_RADIUS).astype(dtype)


def to_primitive(values: np.ndarray) -> Primitive:
    v = np.array(values, dtype=np.float64)
    v[:3] = np.maximum(v[:3], MIN_LENGTH)
    return Primitive(v)


class PrimitiveGraphModel:
    """Parameters of both stages live in one store, namespaced ``proposal.*`` and ``reasoning.*``."""

    def __init__(self, cfg: ModelConfig | None = None, seed: int = 0, dtype=np.float32,
                 stats: NormalizationStats | None = None, tau_sym: float = TAU_SYM):
        self.cfg = cfg or ModelConfig()
        self.dtype = np.dtype(dtype)
        self.store = nn.ParameterStore(self.dtype)
        rng = np.random.default_rng(seed)
        self.proposal = ProposalNetwork(self.store, self.cfg, rng)
        self.reasoning = ReasoningNetwork(self.store, self.cfg, rng)
        self.stats = stats or NormalizationStats.identity()
        self.tau_sym = tau_sym

    # -- stage 1 ----------------------------------------------------------
    def propose_batch(self, depths) -> tuple[list[list[Proposal]], list[tuple[float, int]]]:
        images = np.stack([prepare_image(d, self.dtype) for d in depths])[:, None]
        return self.proposal.propose_batch(images)

    def propose(self, depth) -> list[Proposal]:
        return self.propose_batch([depth])[0][0]

    # -- stage 2 ----------------------------------------------------------
    def reason(self, proposals: list[Proposal]) -> list[FinalPrediction]:
        if not proposals:
            raise ValueError("reasoning needs at least one proposal")
        h = np.stack([q.h for q in proposals])
        s = np.stack([q.s for q in proposals])
        p = np.stack([q.p for q in proposals])
        out = self.reasoning(h, s, p)
        labels = np.argmax(out.probs.data, axis=1)
        geometry = out.select(labels).data
        return [FinalPrediction(params=geometry[i].astype(np.float64),
                                dist=out.probs.data[i].astype(np.float64), source=i)
                for i in range(len(proposals))]

    def finalize(self, finals: list[FinalPrediction]) -> ShapeSet:
        """Drop background, pair-NMS, denormalize and mirror-expand."""
        survivors = [(f.params, f.label, f.confidence) for f in finals if f.label > 0]
        if not survivors:
            return ShapeSet([], [], warning="all predictions classified as background")
        kept = pairing_nms(survivors)
        prims = [to_primitive(self.stats.denormalize(params)) for params, _, _ in kept]
        labels = [label for _, label, _ in kept]
        prims, labels = unfold(prims, labels, self.tau_sym)
        return ShapeSet(prims, labels)

    def predict_batch(self, depths) -> list[ShapeSet]:
        proposals, _ = self.propose_batch(depths)
        return [self.finalize(self.reason(q)) for q in proposals]

    def predict(self, depth) -> ShapeSet:
        return self.predict_batch([depth])[0]

    # -- persistence --------------------------------------------------------
    def state_tensors(self, prefixes: tuple[str, ...] = ("proposal.", "reasoning.")) -> dict[str, np.ndarray]:
        out = {
            "meta.config": self.cfg.to_vector(),
            "meta.norm_mean": self.stats.mean.astype(np.float32),
            "meta.norm_std": self.stats.std.astype(np.float32),
        }
        for name, t in self.store.items():
            if name.startswith(prefixes):
                out[name] = t.data.astype(np.float32)
        return out

    def save(self, path, prefixes: tuple[str, ...] = ("proposal.", "reasoning.")) -> None:
        nn.save_checkpoint(path, self.state_tensors(prefixes))

    def has_stage(self, tensors: dict, prefix: str) -> bool:
        return any(k.startswith(prefix) for k in tensors)

    @classmethod
    def load(cls, path, seed: int = 0, dtype=np.float32) -> "PrimitiveGraphModel":
        if not Path(path).exists():
            raise ModelLoadError(f"checkpoint {path} does not exist")
        tensors = nn.load_checkpoint(path)
        if "meta.config" not in tensors:
            raise ModelLoadError(f"checkpoint {path} has no model configuration")
        cfg = ModelConfig.from_vector(tensors["meta.config"])
        stats = NormalizationStats(tensors["meta.norm_mean"], tensors["meta.norm_std"])
        model = cls(cfg, seed=seed, dtype=dtype, stats=stats)
        model.store.load_state_dict({k: v for k, v in tensors.items() if not k.startswith("meta.")})
        model.loaded_stages = {p for p in ("proposal", "reasoning") if model.has_stage(tensors, p + ".")}
        return model
