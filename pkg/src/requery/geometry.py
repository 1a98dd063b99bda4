"""Axis-aligned boxes, IoU and the 0/100 comprehension loss."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import InputError

IOU_THRESHOLD = 0.5
CORRECT = 0
INCORRECT = 100


@dataclass(frozen=True)
class Box:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if not (self.x_max >= self.x_min and self.y_max >= self.y_min):
            raise InputError(f"invalid box {self.as_list()}: max < min")

    @classmethod
    def from_seq(cls, values) -> "Box":
        values = list(values)
        if len(values) != 4:
            raise InputError(f"box needs 4 coordinates, got {len(values)}")
        return cls(*(float(v) for v in values))

    def as_list(self) -> list[float]:
        return [self.x_min, self.y_min, self.x_max, self.y_max]

    @property
    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)


def _check(box) -> Box:
    if not isinstance(box, Box):
        box = Box.from_seq(box)
    return box


def iou(a: Box, b: Box) -> float:
    """Intersection over union; 0 when the union is empty."""
    a, b = _check(a), _check(b)
    w = max(0.0, min(a.x_max, b.x_max) - max(a.x_min, b.x_min))
    h = max(0.0, min(a.y_max, b.y_max) - max(a.y_min, b.y_min))
    inter = w * h
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def loss(pred: Box, gold: Box) -> int:
    """0 if the prediction overlaps the target with IoU strictly above 0.5, else 100."""
    return CORRECT if iou(pred, gold) > IOU_THRESHOLD else INCORRECT
