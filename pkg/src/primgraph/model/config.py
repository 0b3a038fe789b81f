from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np


@dataclass(frozen=True)
class ModelConfig:
    """Network sizes. ``m_c == 1`` switches on the semantic-agnostic simplifications."""

    m_c: int = 6
    d_h: int = 64
    d_z: int = 96
    n_max: int = 15
    image_size: int = 64
    channels: tuple[int, int, int] = (16, 32, 32)
    global_dim: int = 256
    roi_size: int = 2
    head_hidden: int = 64

    def __post_init__(self):
        if self.m_c < 1:
            raise ValueError("m_c must be at least 1")
        if self.d_h <= 0 or self.d_z <= 0:
            raise ValueError("hidden sizes must be positive")
        if self.d_z - 2 * math.ceil(self.d_z / 3) <= 0:
            raise ValueError(f"d_z={self.d_z} cannot be split into three non-empty slots")
        if self.image_size % 8:
            raise ValueError("image size must be divisible by 8")

    @classmethod
    def full(cls, m_c: int = 6) -> "ModelConfig":
        return cls(m_c=m_c, d_h=800, d_z=1024)

    @classmethod
    def desk(cls, m_c: int = 6) -> "ModelConfig":
        return cls(m_c=m_c)

    @property
    def agnostic(self) -> bool:
        return self.m_c == 1

    @property
    def feature_channels(self) -> int:
        return self.channels[-1]

    @property
    def roi_dim(self) -> int:
        return self.feature_channels * self.roi_size**2

    @property
    def lstm_input_dim(self) -> int:
        # x^g, v_i, b_i, s_i, p_i
        return self.global_dim + self.roi_dim + 4 + self.m_c + 9

    @property
    def z_split(self) -> tuple[int, int, int]:
        third = math.ceil(self.d_z / 3)
        return third, third, self.d_z - 2 * third

    def to_vector(self) -> np.ndarray:
        vals = [self.m_c, self.d_h, self.d_z, self.n_max, self.image_size, *self.channels,
                self.global_dim, self.roi_size, self.head_hidden]
        return np.array(vals, dtype=np.float32)

    @classmethod
    def from_vector(cls, vec) -> "ModelConfig":
        v = [int(round(float(x))) for x in np.asarray(vec).reshape(-1)]
        return cls(m_c=v[0], d_h=v[1], d_z=v[2], n_max=v[3], image_size=v[4],
                   channels=(v[5], v[6], v[7]), global_dim=v[8], roi_size=v[9], head_hidden=v[10])

    def as_dict(self) -> dict:
        return asdict(self)


CONFIG_KEYS = tuple(f.name for f in fields(ModelConfig))
