from .config import ModelConfig
from .pipeline import ModelLoadError, PrimitiveGraphModel, prepare_image, to_primitive
from .proposal import DIRECTIONS, Proposal, ProposalNetwork, SequenceGenerator, clamp_count, round_half_up
from .reasoning import FinalPrediction, ReasoningNetwork, ReasoningOutput, message_pass

__all__ = [
    "DIRECTIONS",
    "FinalPrediction",
    "ModelConfig",
    "ModelLoadError",
    "PrimitiveGraphModel",
    "Proposal",
    "ProposalNetwork",
    "ReasoningNetwork",
    "ReasoningOutput",
    "SequenceGenerator",
    "clamp_count",
    "message_pass",
    "prepare_image",
    "round_half_up",
    "to_primitive",
]
