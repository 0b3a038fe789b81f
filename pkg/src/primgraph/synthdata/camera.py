"""Pinhole cameras on a sphere around the object, depth rendering and 2D part boxes.

Image conventions: pixel (row r, column q) has its centre at (q + 0.5, r + 0.5);
the image x axis follows the camera's right vector and the image y axis points
down (opposite the camera's up vector). Depth is the hit parameter along rays
whose forward component is 1, i.e. distance along the optical axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..geometry import Primitive, corners, rotation_matrix

DEFAULT_RADIUS = 2.0
DEFAULT_SIZE = 64
# The unit cube spans ~70% of the frame at the default radius.
DEFAULT_FOCAL = 0.7 * DEFAULT_SIZE * DEFAULT_RADIUS
MAX_LATITUDE_DEG = 20.0


class ProjectionError(ValueError):
    pass


@dataclass(frozen=True)
class Camera:
    position: tuple[float, float, float]
    focal: float = DEFAULT_FOCAL
    width: int = DEFAULT_SIZE
    height: int = DEFAULT_SIZE

    def __post_init__(self):
        if self.focal <= 0:
            raise ValueError("focal length must be positive")

    @property
    def latitude(self) -> float:
        p = np.asarray(self.position)
        return math.degrees(math.asin(p[2] / np.linalg.norm(p)))

    def frame(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(right, up, forward) unit vectors; the camera looks at the origin with +z up."""
        c = np.asarray(self.position, dtype=np.float64)
        forward = -c / np.linalg.norm(c)
        right = np.cross(forward, [0.0, 0.0, 1.0])
        right /= np.linalg.norm(right)
        up = np.cross(right, forward)
        return right, up, forward

    def to_camera(self, points: np.ndarray) -> np.ndarray:
        right, up, forward = self.frame()
        d = np.asarray(points, dtype=np.float64) - np.asarray(self.position)
        return np.stack([d @ right, d @ up, d @ forward], axis=-1)

    def rays(self) -> tuple[np.ndarray, np.ndarray]:
        """Origin (3,) and per-pixel directions (H*W, 3) with unit forward component."""
        right, up, forward = self.frame()
        cols = (np.arange(self.width) + 0.5 - self.width / 2) / self.focal
        rows = (np.arange(self.height) + 0.5 - self.height / 2) / self.focal
        rr, cc = np.meshgrid(rows, cols, indexing="ij")
        dirs = forward + cc.reshape(-1, 1) * right - rr.reshape(-1, 1) * up
        return np.asarray(self.position, dtype=np.float64), dirs


def sample_views(rng: np.random.Generator, count: int = 5, radius: float = DEFAULT_RADIUS,
                 max_latitude: float = MAX_LATITUDE_DEG, focal: float = DEFAULT_FOCAL,
                 size: int = DEFAULT_SIZE) -> list[Camera]:
    """Uniform directions on the sphere, rejected until within ``max_latitude`` of the equator."""
    if count < 1:
        raise ValueError("need at least one view")
    limit = math.sin(math.radians(max_latitude))
    views = []
    while len(views) < count:
        v = rng.normal(size=3)
        n = np.linalg.norm(v)
        if n == 0:
            continue
        v = v / n
        if abs(v[2]) <= limit:
            views.append(Camera(tuple(float(x) for x in v * radius), focal, size, size))
    return views


def ray_box_hits(origin: np.ndarray, dirs: np.ndarray, p: Primitive) -> np.ndarray:
    """Nearest positive slab-test hit parameter per ray (inf on a miss)."""
    rot = rotation_matrix(p.rotation)
    o = (origin - p.translation) @ rot
    d = dirs @ rot
    half = p.lengths / 2.0
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (-half - o) / d
        t2 = (half - o) / d
    near = np.minimum(t1, t2).max(axis=1)
    far = np.maximum(t1, t2).min(axis=1)
    hit = (near <= far) & (far > 0)
    t = np.where(near > 0, near, far)
    return np.where(hit, t, np.inf)


def render_depth(primitives, camera: Camera) -> np.ndarray:
    """(H, W) depth raster; 0 marks pixels that hit nothing."""
    origin, dirs = camera.rays()
    best = np.full(len(dirs), np.inf)
    for p in primitives:
        best = np.minimum(best, ray_box_hits(origin, dirs, p))
    best[~np.isfinite(best)] = 0.0
    return best.reshape(camera.height, camera.width)


def project_points(points: np.ndarray, camera: Camera) -> np.ndarray:
    """Normalized image coordinates (N, 2) of world points."""
    cam = camera.to_camera(points)
    if np.any(cam[:, 2] <= 0):
        raise ProjectionError("point behind the camera")
    u = (camera.width / 2 + camera.focal * cam[:, 0] / cam[:, 2]) / camera.width
    v = (camera.height / 2 - camera.focal * cam[:, 1] / cam[:, 2]) / camera.height
    return np.stack([u, v], axis=-1)


def project_box(p: Primitive, camera: Camera, clamp: bool = True) -> np.ndarray:
    uv = project_points(corners(p), camera)
    box = np.concatenate([uv.min(axis=0), uv.max(axis=0)])
    return np.clip(box, 0.0, 1.0) if clamp else box


def project_boxes(primitives, camera: Camera) -> np.ndarray:
    """(N, 4) boxes (x0, y0, x1, y1) in normalized image coordinates, clamped to [0, 1]."""
    return np.array([project_box(p, camera) for p in primitives]).reshape(-1, 4)
