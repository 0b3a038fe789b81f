"""Procedural part-labelled furniture in a normalized object frame.

Objects live inside [-0.5, 0.5]^3 with +z up, the floor at z = -0.5 and the
bilateral symmetry plane at x = 0. Symmetric parts are emitted as a left
member (t_x < 0) followed by its exact mirror image.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..geometry import Primitive, mirror

FLOOR = -0.5


@dataclass(frozen=True)
class PartSlot:
    label: int
    name: str
    count: tuple[int, int]
    ranges: dict[str, tuple[float, float]] = field(default_factory=dict)
    symmetric: bool = False
    probability: float = 1.0


@dataclass(frozen=True)
class ObjectTemplate:
    category: str
    m_c: int
    slots: tuple[PartSlot, ...]
    builder: Callable[["ObjectTemplate", np.random.Generator], list[tuple[int, Primitive]]]

    def __post_init__(self):
        if not self.slots:
            raise ValueError("template needs at least one part slot")
        for s in self.slots:
            if not 1 <= s.label <= self.m_c:
                raise ValueError(f"slot {s.name} label {s.label} outside 1..{self.m_c}")

    def slot(self, name: str) -> PartSlot:
        for s in self.slots:
            if s.name == name:
                return s
        raise KeyError(name)

    @property
    def label_names(self) -> dict[int, str]:
        return {s.label: s.name for s in self.slots}


def _draw(rng: np.random.Generator, slot: PartSlot, key: str) -> float:
    lo, hi = slot.ranges[key]
    return float(rng.uniform(lo, hi))


def _present(rng: np.random.Generator, slot: PartSlot) -> bool:
    return slot.probability >= 1.0 or bool(rng.random() < slot.probability)


def _pair(label: int, left: Primitive) -> list[tuple[int, Primitive]]:
    return [(label, left), (label, mirror(left))]


def _box(lengths, center, rotation=(0.0, 0.0, 0.0)) -> Primitive:
    return Primitive.make(lengths, center, rotation)


# ---------------------------------------------------------------------------
# chair
# ---------------------------------------------------------------------------
def _build_chair(t: ObjectTemplate, rng: np.random.Generator) -> list[tuple[int, Primitive]]:
    seat, leg, back = t.slot("seat"), t.slot("leg"), t.slot("back")
    arm, post, stretcher = t.slot("arm"), t.slot("arm_post"), t.slot("stretcher")

    width = _draw(rng, seat, "width")
    depth = _draw(rng, seat, "depth")
    thick = _draw(rng, seat, "thickness")
    leg_len = _draw(rng, leg, "length")
    leg_w = _draw(rng, leg, "thickness")
    inset = _draw(rng, leg, "inset")
    seat_bottom = FLOOR + leg_len
    seat_top = seat_bottom + thick

    parts: list[tuple[int, Primitive]] = []
    lx = -(width / 2 - leg_w / 2 - inset)
    for ly in (-(depth / 2 - leg_w / 2 - inset), depth / 2 - leg_w / 2 - inset):
        parts += _pair(leg.label, _box((leg_w, leg_w, leg_len), (lx, ly, FLOOR + leg_len / 2)))
    parts.append((seat.label, _box((width, depth, thick), (0.0, 0.0, seat_bottom + thick / 2))))

    tilt = _draw(rng, back, "tilt")
    back_t = _draw(rng, back, "thickness")
    base_y = depth / 2 - back_t / 2
    # keep every corner of the tilted panel inside the unit box (top edge and rear edge)
    max_h = (0.5 - seat_top - np.sin(tilt) * back_t / 2) / np.cos(tilt)
    if tilt > 0:
        max_h = min(max_h, (0.5 - base_y - np.cos(tilt) * back_t / 2) / np.sin(tilt))
    back_h = min(_draw(rng, back, "height"), max_h - 1e-6)
    center = (0.0, base_y + np.sin(tilt) * back_h / 2, seat_top + np.cos(tilt) * back_h / 2)
    parts.append((back.label, _box((width, back_t, back_h), center, (-tilt, 0.0, 0.0))))

    if _present(rng, arm):
        arm_h = _draw(rng, post, "height")
        post_w = _draw(rng, post, "thickness")
        px = -(width / 2 - post_w / 2)
        py = -(depth / 2 - post_w / 2) + 0.05
        parts += _pair(post.label, _box((post_w, post_w, arm_h), (px, py, seat_top + arm_h / 2)))
        arm_len = _draw(rng, arm, "length") * depth
        arm_t = _draw(rng, arm, "thickness")
        ay = py - post_w / 2 + arm_len / 2
        parts += _pair(arm.label, _box((post_w * 1.5, arm_len, arm_t),
                                       (px, ay, seat_top + arm_h + arm_t / 2)))

    if _present(rng, stretcher):
        st = _draw(rng, stretcher, "thickness")
        z = FLOOR + _draw(rng, stretcher, "height") * leg_len
        span = depth - 2 * inset - 2 * leg_w
        parts += _pair(stretcher.label, _box((st, span, st), (lx, 0.0, z)))
    return parts


CHAIR = ObjectTemplate(
    category="chair",
    m_c=6,
    slots=(
        PartSlot(1, "leg", (4, 4), {"length": (0.38, 0.5), "thickness": (0.05, 0.08),
                                    "inset": (0.0, 0.04)}, symmetric=True),
        PartSlot(2, "seat", (1, 1), {"width": (0.55, 0.8), "depth": (0.55, 0.75),
                                     "thickness": (0.06, 0.1)}),
        PartSlot(3, "back", (1, 1), {"height": (0.35, 0.55), "thickness": (0.05, 0.08),
                                     "tilt": (0.0, 0.2)}),
        PartSlot(4, "arm", (0, 2), {"length": (0.6, 0.85), "thickness": (0.04, 0.06)},
                 symmetric=True, probability=0.25),
        PartSlot(5, "arm_post", (0, 2), {"height": (0.15, 0.22), "thickness": (0.04, 0.06)},
                 symmetric=True, probability=0.25),
        PartSlot(6, "stretcher", (0, 2), {"thickness": (0.03, 0.04), "height": (0.25, 0.45)},
                 symmetric=True, probability=0.25),
    ),
    builder=_build_chair,
)


# ---------------------------------------------------------------------------
# table
# ---------------------------------------------------------------------------
def _build_table(t: ObjectTemplate, rng: np.random.Generator) -> list[tuple[int, Primitive]]:
    top, leg, stretcher, shelf = t.slot("top"), t.slot("leg"), t.slot("stretcher"), t.slot("shelf")
    width = _draw(rng, top, "width")
    depth = _draw(rng, top, "depth")
    thick = _draw(rng, top, "thickness")
    leg_len = _draw(rng, leg, "length")
    leg_w = _draw(rng, leg, "thickness")
    inset = _draw(rng, leg, "inset")

    parts: list[tuple[int, Primitive]] = []
    lx = -(width / 2 - leg_w / 2 - inset)
    for ly in (-(depth / 2 - leg_w / 2 - inset), depth / 2 - leg_w / 2 - inset):
        parts += _pair(leg.label, _box((leg_w, leg_w, leg_len), (lx, ly, FLOOR + leg_len / 2)))
    parts.append((top.label, _box((width, depth, thick), (0.0, 0.0, FLOOR + leg_len + thick / 2))))
    if _present(rng, shelf):
        z = FLOOR + _draw(rng, shelf, "height") * leg_len
        sw = width - 2 * inset - 2 * leg_w
        parts.append((shelf.label, _box((sw, depth - 2 * inset, 0.03), (0.0, 0.0, z))))
    elif _present(rng, stretcher):
        st = _draw(rng, stretcher, "thickness")
        z = FLOOR + _draw(rng, stretcher, "height") * leg_len
        span = depth - 2 * inset - 2 * leg_w
        parts += _pair(stretcher.label, _box((st, span, st), (lx, 0.0, z)))
    return parts


TABLE = ObjectTemplate(
    category="table",
    m_c=4,
    slots=(
        PartSlot(1, "leg", (4, 4), {"length": (0.5, 0.75), "thickness": (0.05, 0.09),
                                    "inset": (0.0, 0.05)}, symmetric=True),
        PartSlot(2, "top", (1, 1), {"width": (0.75, 1.0), "depth": (0.5, 0.9),
                                    "thickness": (0.04, 0.08)}),
        PartSlot(3, "stretcher", (0, 2), {"thickness": (0.03, 0.05), "height": (0.2, 0.4)},
                 symmetric=True, probability=0.3),
        PartSlot(4, "shelf", (0, 1), {"height": (0.15, 0.3)}, probability=0.25),
    ),
    builder=_build_table,
)


# ---------------------------------------------------------------------------
# nightstand-like box unit
# ---------------------------------------------------------------------------
def _build_nightstand(t: ObjectTemplate, rng: np.random.Generator) -> list[tuple[int, Primitive]]:
    side, top, drawer, leg = t.slot("side"), t.slot("top"), t.slot("drawer"), t.slot("leg")
    width = _draw(rng, top, "width")
    depth = _draw(rng, top, "depth")
    thick = _draw(rng, top, "thickness")
    panel = _draw(rng, side, "thickness")
    body_h = _draw(rng, side, "height")

    parts: list[tuple[int, Primitive]] = []
    base = FLOOR
    if _present(rng, leg):
        leg_len = _draw(rng, leg, "length")
        leg_w = _draw(rng, leg, "thickness")
        lx = -(width / 2 - leg_w / 2)
        for ly in (-(depth / 2 - leg_w / 2), depth / 2 - leg_w / 2):
            parts += _pair(leg.label, _box((leg_w, leg_w, leg_len), (lx, ly, FLOOR + leg_len / 2)))
        base = FLOOR + leg_len
    parts += _pair(side.label, _box((panel, depth, body_h), (-(width / 2 - panel / 2), 0.0, base + body_h / 2)))
    parts.append((top.label, _box((width, depth, thick), (0.0, 0.0, base + body_h + thick / 2))))
    n_drawers = int(rng.integers(drawer.count[0], drawer.count[1] + 1))
    inner_w = width - 2 * panel
    dh = body_h / n_drawers
    for k in range(n_drawers):
        z = base + dh * (k + 0.5)
        parts.append((drawer.label, _box((inner_w, 0.04, dh * 0.9), (0.0, -(depth / 2 - 0.02), z))))
    return parts


NIGHTSTAND = ObjectTemplate(
    category="nightstand",
    m_c=4,
    slots=(
        PartSlot(1, "side", (2, 2), {"thickness": (0.04, 0.07), "height": (0.45, 0.7)}, symmetric=True),
        PartSlot(2, "top", (1, 1), {"width": (0.6, 0.9), "depth": (0.5, 0.8), "thickness": (0.04, 0.07)}),
        PartSlot(3, "drawer", (1, 2)),
        PartSlot(4, "leg", (0, 4), {"length": (0.08, 0.2), "thickness": (0.04, 0.07)},
                 symmetric=True, probability=0.5),
    ),
    builder=_build_nightstand,
)

TEMPLATES = {t.category: t for t in (CHAIR, TABLE, NIGHTSTAND)}


def get_template(name: str) -> ObjectTemplate:
    try:
        return TEMPLATES[name]
    except KeyError:
        raise ValueError(f"unknown template {name!r}; choose from {sorted(TEMPLATES)}") from None


def generate_object(template: ObjectTemplate, rng: np.random.Generator) -> tuple[list[Primitive], list[int]]:
    parts = template.builder(template, rng)
    return [p for _, p in parts], [label for label, _ in parts]
