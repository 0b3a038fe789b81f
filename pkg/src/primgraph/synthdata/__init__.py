from .camera import (
    Camera,
    ProjectionError,
    project_box,
    project_boxes,
    project_points,
    ray_box_hits,
    render_depth,
    sample_views,
)
from .dataset import (
    DatasetError,
    DatasetSample,
    fold_order,
    generate_dataset,
    read_dataset,
    split_by_object,
    unfold,
    write_dataset,
)
from .templates import CHAIR, NIGHTSTAND, TABLE, TEMPLATES, ObjectTemplate, PartSlot, generate_object, get_template

__all__ = [
    "CHAIR",
    "Camera",
    "DatasetError",
    "DatasetSample",
    "NIGHTSTAND",
    "ObjectTemplate",
    "PartSlot",
    "ProjectionError",
    "TABLE",
    "TEMPLATES",
    "fold_order",
    "generate_dataset",
    "generate_object",
    "get_template",
    "project_box",
    "project_boxes",
    "project_points",
    "ray_box_hits",
    "read_dataset",
    "render_depth",
    "sample_views",
    "split_by_object",
    "unfold",
    "write_dataset",
]
