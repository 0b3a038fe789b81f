"""Dataset samples, symmetry folding and the on-disk dataset format.

A dataset directory holds ``index.jsonl`` (one JSON object per sample) and
``depth/<id>.f32`` rasters: u32 width, u32 height, then little-endian
float32 values in row-major order.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..geometry import TAU_SYM, Primitive, mirror
from .camera import Camera, project_boxes, render_depth, sample_views
from .templates import ObjectTemplate, generate_object, get_template

INDEX_FIELDS = ("id", "category", "object_id", "camera", "primitives", "boxes", "folded", "n_o")
CAMERA_FIELDS = ("position", "focal", "width", "height")


class DatasetError(ValueError):
    pass


@dataclass
class DatasetSample:
    id: str
    category: str
    object_id: int
    depth: np.ndarray
    camera: Camera
    primitives: list[Primitive]
    labels: list[int]
    boxes: np.ndarray
    folded: list[int]

    @property
    def n_o(self) -> int:
        return len(self.folded)

    def __eq__(self, other) -> bool:
        if not isinstance(other, DatasetSample):
            return NotImplemented
        return (
            self.id == other.id
            and self.category == other.category
            and self.object_id == other.object_id
            and self.camera == other.camera
            and self.labels == other.labels
            and self.folded == other.folded
            and self.primitives == other.primitives
            and self.depth.dtype == other.depth.dtype
            and np.array_equal(self.depth, other.depth)
            and np.array_equal(self.boxes, other.boxes)
        )


def fold_order(primitives: list[Primitive], tau: float = TAU_SYM) -> list[int]:
    """Indices of the folded half, sorted bottom-up by centre height.

    Keeps on-plane parts (|t_x| <= tau), left members (t_x < -tau) and any
    right-side part without an exact mirrored partner. Ties in height break by
    ascending t_x, then t_y.
    """
    keep = []
    for i, p in enumerate(primitives):
        tx = p.translation[0]
        if tx <= tau:
            keep.append(i)
            continue
        partner = any(
            q.translation[0] < -tau and np.allclose(mirror(q).params, p.params, atol=1e-9)
            for q in primitives
        )
        if not partner:
            keep.append(i)
    return sorted(keep, key=lambda i: (primitives[i].translation[2], primitives[i].translation[0],
                                       primitives[i].translation[1], i))


def unfold(primitives: list[Primitive], labels: list[int], tau: float = TAU_SYM):
    """Mirror-expand every primitive whose |t_x| exceeds ``tau``."""
    out_p, out_l = [], []
    for p, label in zip(primitives, labels):
        out_p.append(p)
        out_l.append(label)
        if abs(p.translation[0]) > tau:
            out_p.append(mirror(p))
            out_l.append(label)
    return out_p, out_l


def make_sample(sample_id: str, template: ObjectTemplate, object_id: int,
                primitives: list[Primitive], labels: list[int], camera: Camera) -> DatasetSample:
    depth = render_depth(primitives, camera).astype(np.float32)
    return DatasetSample(
        id=sample_id,
        category=template.category,
        object_id=object_id,
        depth=depth,
        camera=camera,
        primitives=primitives,
        labels=labels,
        boxes=project_boxes(primitives, camera),
        folded=fold_order(primitives),
    )


def generate_dataset(template: str | ObjectTemplate, count: int, seed: int = 0,
                     views_per_object: int = 5) -> list[DatasetSample]:
    """``count`` samples; each object is rendered from ``views_per_object`` cameras."""
    if isinstance(template, str):
        template = get_template(template)
    rng = np.random.default_rng(seed)
    samples: list[DatasetSample] = []
    object_id = 0
    while len(samples) < count:
        prims, labels = generate_object(template, rng)
        for cam in sample_views(rng, views_per_object):
            if len(samples) == count:
                break
            sid = f"{template.category}_{len(samples):05d}"
            samples.append(make_sample(sid, template, object_id, prims, labels, cam))
        object_id += 1
    return samples


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------
def _depth_bytes(depth: np.ndarray) -> bytes:
    h, w = depth.shape
    return struct.pack("<II", w, h) + np.ascontiguousarray(depth, dtype="<f4").tobytes()


def _parse_depth(blob: bytes, sample_id: str) -> np.ndarray:
    if len(blob) < 8:
        raise DatasetError(f"sample {sample_id}: depth file shorter than its header")
    w, h = struct.unpack_from("<II", blob, 0)
    if len(blob) != 8 + 4 * w * h:
        raise DatasetError(f"sample {sample_id}: depth file has {len(blob) - 8} data bytes, "
                           f"expected {4 * w * h}")
    return np.frombuffer(blob, dtype="<f4", offset=8).reshape(h, w).astype(np.float32)


def _sample_record(s: DatasetSample) -> dict:
    return {
        "id": s.id,
        "category": s.category,
        "object_id": s.object_id,
        "camera": {
            "position": [float(v) for v in s.camera.position],
            "focal": float(s.camera.focal),
            "width": int(s.camera.width),
            "height": int(s.camera.height),
        },
        "primitives": [[int(l)] + [float(v) for v in p.params] for p, l in zip(s.primitives, s.labels)],
        "boxes": [[float(v) for v in b] for b in s.boxes],
        "folded": [int(i) for i in s.folded],
        "n_o": s.n_o,
    }


def write_dataset(samples: list[DatasetSample], directory) -> None:
    root = Path(directory)
    (root / "depth").mkdir(parents=True, exist_ok=True)
    lines = []
    for s in sorted(samples, key=lambda s: s.id):
        (root / "depth" / f"{s.id}.f32").write_bytes(_depth_bytes(s.depth))
        lines.append(json.dumps(_sample_record(s)))
    (root / "index.jsonl").write_text("\n".join(lines) + "\n")


def _check_fields(record: dict, expected: tuple[str, ...], where: str) -> None:
    keys = set(record)
    unknown = keys - set(expected)
    missing = set(expected) - keys
    if unknown:
        raise DatasetError(f"{where}: unknown field(s) {sorted(unknown)}")
    if missing:
        raise DatasetError(f"{where}: missing field(s) {sorted(missing)}")


def _parse_record(record: dict, root: Path, lineno: int) -> DatasetSample:
    sid = record.get("id", f"<line {lineno}>")
    _check_fields(record, INDEX_FIELDS, f"sample {sid}")
    _check_fields(record["camera"], CAMERA_FIELDS, f"sample {sid} camera")
    try:
        cam = record["camera"]
        camera = Camera(tuple(float(v) for v in cam["position"]), float(cam["focal"]),
                        int(cam["width"]), int(cam["height"]))
        rows = record["primitives"]
        labels = [int(r[0]) for r in rows]
        prims = [Primitive(np.array(r[1:], dtype=np.float64)) for r in rows]
        boxes = np.array(record["boxes"], dtype=np.float64).reshape(-1, 4)
        folded = [int(i) for i in record["folded"]]
    except (TypeError, ValueError, IndexError) as exc:
        raise DatasetError(f"sample {sid}: {exc}") from exc
    if len(boxes) != len(prims):
        raise DatasetError(f"sample {sid}: {len(boxes)} boxes for {len(prims)} primitives")
    if record["n_o"] != len(folded):
        raise DatasetError(f"sample {sid}: n_o {record['n_o']} != {len(folded)} folded entries")
    path = root / "depth" / f"{sid}.f32"
    if not path.exists():
        raise DatasetError(f"sample {sid}: missing depth file {path}")
    depth = _parse_depth(path.read_bytes(), sid)
    return DatasetSample(sid, record["category"], int(record["object_id"]), depth, camera,
                         prims, labels, boxes, folded)


def read_dataset(directory) -> list[DatasetSample]:
    root = Path(directory)
    index = root / "index.jsonl"
    if not index.exists():
        raise DatasetError(f"{root}: no index.jsonl")
    samples = []
    for lineno, line in enumerate(index.read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DatasetError(f"index line {lineno}: {exc}") from exc
        samples.append(_parse_record(record, root, lineno))
    return samples


def split_by_object(samples: list[DatasetSample], n_train: int) -> tuple[list[DatasetSample], list[DatasetSample]]:
    """First ``n_train`` samples for training, the rest for testing, with no object shared.

    Test samples whose object also appears in the training part are dropped.
    """
    train = samples[:n_train]
    seen = {s.object_id for s in train}
    test = [s for s in samples[n_train:] if s.object_id not in seen]
    return train, test
