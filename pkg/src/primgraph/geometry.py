"""Oriented-box primitives and the geometric operations built on them.

A primitive is a 9-vector ``[lx, ly, lz, tx, ty, tz, rx, ry, rz]``: edge
lengths, centre translation and Euler angles. Rotations compose extrinsically
X then Y then Z, i.e. ``R = Rz @ Ry @ Rx``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

# Local-axis sign patterns in binary order: ---, --+, -+-, -++, +--, +-+, ++-, +++
CORNER_SIGNS = np.array(
    [[sx, sy, sz] for sx in (-1.0, 1.0) for sy in (-1.0, 1.0) for sz in (-1.0, 1.0)]
)

# Triangles of a box over CORNER_SIGNS indices, outward winding.
BOX_FACES = np.array(
    [
        [0, 1, 3], [0, 3, 2],  # -x
        [4, 6, 7], [4, 7, 5],  # +x
        [0, 4, 5], [0, 5, 1],  # -y
        [2, 3, 7], [2, 7, 6],  # +y
        [0, 2, 6], [0, 6, 4],  # -z
        [1, 5, 7], [1, 7, 3],  # +z
    ]
)


# Parts with |t_x| at or below this are treated as lying on the symmetry plane.
TAU_SYM = 0.02


class InvalidPrimitiveError(ValueError):
    pass


def wrap_angle(theta):
    """Map angles into (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(theta, dtype=np.float64), 2 * np.pi)


@dataclass(frozen=True, eq=False)
class Primitive:
    params: np.ndarray

    def __post_init__(self):
        p = np.array(self.params, dtype=np.float64).reshape(-1)
        if p.shape != (9,):
            raise InvalidPrimitiveError(f"primitive needs 9 parameters, got {p.shape[0]}")
        if not np.all(np.isfinite(p)):
            raise InvalidPrimitiveError(f"non-finite primitive parameters {p}")
        if np.any(p[:3] <= 0):
            raise InvalidPrimitiveError(f"edge lengths must be positive, got {p[:3]}")
        p[6:] = wrap_angle(p[6:])
        p.setflags(write=False)
        object.__setattr__(self, "params", p)

    @classmethod
    def make(cls, lengths, translation=(0.0, 0.0, 0.0), rotation=(0.0, 0.0, 0.0)) -> "Primitive":
        return cls(np.concatenate([np.asarray(lengths, float), np.asarray(translation, float),
                                   np.asarray(rotation, float)]))

    @property
    def lengths(self) -> np.ndarray:
        return self.params[0:3]

    @property
    def translation(self) -> np.ndarray:
        return self.params[3:6]

    @property
    def rotation(self) -> np.ndarray:
        return self.params[6:9]

    def translated(self, offset) -> "Primitive":
        p = self.params.copy()
        p[3:6] += np.asarray(offset, dtype=np.float64)
        return Primitive(p)

    def __eq__(self, other) -> bool:
        return isinstance(other, Primitive) and np.array_equal(self.params, other.params)

    def __hash__(self) -> int:
        return hash(self.params.tobytes())

    def __repr__(self) -> str:
        vals = ", ".join(f"{v:.4g}" for v in self.params)
        return f"Primitive([{vals}])"


@dataclass
class VoxelGrid:
    resolution: int = 32
    lo: float = -0.5
    hi: float = 0.5
    occupancy: np.ndarray | None = None
    warning: str | None = None

    def __post_init__(self):
        if self.resolution <= 0:
            raise ValueError("resolution must be positive")
        if not self.hi > self.lo:
            raise ValueError("grid extent must have positive side length")
        r = self.resolution
        if self.occupancy is None:
            self.occupancy = np.zeros((r, r, r), dtype=bool)
        else:
            self.occupancy = np.asarray(self.occupancy, dtype=bool).reshape(r, r, r)

    @property
    def voxel_size(self) -> float:
        return (self.hi - self.lo) / self.resolution

    def centers_1d(self) -> np.ndarray:
        return self.lo + (np.arange(self.resolution) + 0.5) * self.voxel_size

    def count(self) -> int:
        return int(self.occupancy.sum())

    def flip_x(self) -> "VoxelGrid":
        return VoxelGrid(self.resolution, self.lo, self.hi, self.occupancy[::-1, :, :].copy())

    def to_text(self) -> str:
        bits = "".join("1" if v else "0" for v in self.occupancy.reshape(-1))
        return f"vox {self.resolution}\n{bits}\n"

    @classmethod
    def from_text(cls, text: str, lo: float = -0.5, hi: float = 0.5) -> "VoxelGrid":
        header, _, body = text.partition("\n")
        tag, _, res = header.partition(" ")
        if tag != "vox":
            raise ValueError(f"bad voxel header {header!r}")
        r = int(res)
        body = body.strip()
        if len(body) != r**3 or set(body) - {"0", "1"}:
            raise ValueError("voxel body does not hold R^3 binary digits")
        occ = np.frombuffer(body.encode("ascii"), dtype=np.uint8) == ord("1")
        return cls(r, lo, hi, occ)


def _check_finite(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise InvalidPrimitiveError(f"non-finite values {arr}")
    return arr


def rotation_matrix(rotation) -> np.ndarray:
    """``Rz(rz) @ Ry(ry) @ Rx(rx)`` for an Euler triple."""
    rx, ry, rz = _check_finite(rotation)
    cx, sx = math.cos(rx), math.sin(rx)
    cy, sy = math.cos(ry), math.sin(ry)
    cz, sz = math.cos(rz), math.sin(rz)
    mx = np.array([[1.0, 0.0, 0.0], [0.0, cx, -sx], [0.0, sx, cx]])
    my = np.array([[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]])
    mz = np.array([[cz, -sz, 0.0], [sz, cz, 0.0], [0.0, 0.0, 1.0]])
    return mz @ my @ mx


def corners(p: Primitive) -> np.ndarray:
    """The 8 box corners (8, 3) in canonical sign order."""
    local = CORNER_SIGNS * (p.lengths / 2.0)
    return p.translation + local @ rotation_matrix(p.rotation).T


def corners_batch(prims: Sequence[Primitive]) -> np.ndarray:
    if not prims:
        return np.zeros((0, 8, 3))
    return np.stack([corners(p) for p in prims])


def mirror(p: Primitive) -> Primitive:
    """Reflect across the plane x = 0."""
    q = p.params.copy()
    q[3] = -q[3]
    q[7] = -q[7]
    q[8] = -q[8]
    return Primitive(q)


def _local_coords(points: np.ndarray, p: Primitive) -> np.ndarray:
    return (points - p.translation) @ rotation_matrix(p.rotation)


def voxelize(shapes: Iterable[Primitive], resolution: int = 32, lo: float = -0.5,
             hi: float = 0.5) -> VoxelGrid:
    """Mark every voxel whose centre lies inside (or on) at least one box."""
    shapes = list(shapes)
    grid = VoxelGrid(resolution, lo, hi)
    if not shapes:
        grid.warning = "empty shape list"
        return grid
    c = grid.centers_1d()
    centers = np.stack(np.meshgrid(c, c, c, indexing="ij"), axis=-1).reshape(-1, 3)
    occ = np.zeros(len(centers), dtype=bool)
    for p in shapes:
        local = _local_coords(centers, p)
        occ |= np.all(np.abs(local) <= p.lengths / 2.0, axis=1)
    grid.occupancy = occ.reshape(resolution, resolution, resolution)
    return grid


def obb_to_aabb(p: Primitive) -> Primitive:
    """Tightest axis-aligned box around the corners of ``p``."""
    if not np.any(p.rotation):
        return p
    pts = corners(p)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    return Primitive.make(hi - lo, (hi + lo) / 2.0)


def diagonal_length(p: Primitive) -> float:
    return float(np.linalg.norm(p.lengths))


# ---------------------------------------------------------------------------
# text and mesh formats
# ---------------------------------------------------------------------------
def format_primitives(prims: Sequence[Primitive], labels: Sequence[int] | None = None) -> str:
    labels = [0] * len(prims) if labels is None else list(labels)
    lines = []
    for label, p in zip(labels, prims):
        lines.append(" ".join([str(int(label))] + [f"{v:.17g}" for v in p.params]))
    return "\n".join(lines) + ("\n" if lines else "")


def parse_primitives(text: str) -> tuple[list[Primitive], list[int]]:
    prims, labels = [], []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if len(fields) != 10:
            raise ValueError(f"line {lineno}: expected 10 fields, got {len(fields)}")
        labels.append(int(fields[0]))
        prims.append(Primitive(np.array([float(v) for v in fields[1:]])))
    return prims, labels


def obj_text(prims: Sequence[Primitive], labels: Sequence[int] | None = None,
             label_names: dict[int, str] | None = None) -> str:
    """Wavefront OBJ with one group per primitive (8 vertices, 12 triangles)."""
    if not prims:
        return "# empty shape\n"
    labels = [0] * len(prims) if labels is None else list(labels)
    lines = [f"# {len(prims)} primitives"]
    for i, (p, label) in enumerate(zip(prims, labels)):
        name = (label_names or {}).get(int(label), f"label{int(label)}")
        lines.append(f"g part{i}_{name}")
        for v in corners(p):
            lines.append("v " + " ".join(f"{x:.9f}" for x in v))
        base = 8 * i + 1
        for f in BOX_FACES:
            lines.append("f " + " ".join(str(base + int(k)) for k in f))
    return "\n".join(lines) + "\n"


def write_obj(path, prims: Sequence[Primitive], labels: Sequence[int] | None = None,
              label_names: dict[int, str] | None = None) -> None:
    Path(path).write_text(obj_text(prims, labels, label_names))


def read_obj_vertices(path) -> np.ndarray:
    verts = []
    for line in Path(path).read_text().splitlines():
        if line.startswith("v "):
            verts.append([float(v) for v in line.split()[1:4]])
    return np.array(verts).reshape(-1, 3)
