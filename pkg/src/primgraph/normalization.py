from __future__ import annotations

from dataclasses import dataclass

import numpy as np

STD_FLOOR = 1e-6


@dataclass
class NormalizationStats:
    """Per-parameter mean and population std of the 9 primitive parameters."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64).reshape(9)
        self.std = np.maximum(np.asarray(self.std, dtype=np.float64).reshape(9), STD_FLOOR)

    @classmethod
    def identity(cls) -> "NormalizationStats":
        return cls(np.zeros(9), np.ones(9))

    @classmethod
    def fit(cls, params: np.ndarray) -> "NormalizationStats":
        params = np.asarray(params, dtype=np.float64).reshape(-1, 9)
        if len(params) == 0:
            raise ValueError("cannot fit normalization statistics on an empty set")
        return cls(params.mean(axis=0), params.std(axis=0))

    def as_float32(self) -> "NormalizationStats":
        """Statistics rounded through float32, as stored in checkpoints."""
        return NormalizationStats(self.mean.astype(np.float32).astype(np.float64),
                                  self.std.astype(np.float32).astype(np.float64))

    def normalize(self, params) -> np.ndarray:
        return (np.asarray(params, dtype=np.float64) - self.mean) / self.std

    def denormalize(self, values) -> np.ndarray:
        return np.asarray(values, dtype=np.float64) * self.std + self.mean
