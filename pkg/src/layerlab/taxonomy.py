"""Semantic class taxonomy.

The engine treats the taxonomy as data: any list of unique class names
works, with 19 body-part classes as the default. Two sentinels live
outside the class index range: UNLABELED for meshes without a label and
BACKGROUND for pixels not covered by any labeled mesh.
"""

from __future__ import annotations

import colorsys
from dataclasses import dataclass, field

from .errors import UnknownClass

UNLABELED = -1
BACKGROUND = -1

DEFAULT_CLASSES = (
    "Hair",
    "Face",
    "Eyes",
    "Eyebrows",
    "Mouth",
    "Ears",
    "Neck",
    "Torso",
    "Arms",
    "Hands",
    "Legs",
    "Feet",
    "Topwear",
    "Bottomwear",
    "Handwear",
    "Footwear",
    "Headwear",
    "Accessories",
    "Other",
)

DEFAULT_STRATIFY = ("Hair", "Handwear", "Topwear", "Bottomwear")

# Golden-ratio hue step; the annotation UI derives the same palette from
# the class index so colors stay stable across sessions.
_HUE_STEP = 0.61803398875


def class_color(index: int) -> tuple[int, int, int]:
    """Deterministic display color for a class index (8-bit RGB)."""
    h = (index * _HUE_STEP) % 1.0
    r, g, b = colorsys.hsv_to_rgb(h, 0.65, 0.95)
    return int(round(r * 255)), int(round(g * 255)), int(round(b * 255))


@dataclass(frozen=True)
class Taxonomy:
    """Ordered class list plus the subset eligible for depth stratification."""

    classes: tuple[str, ...] = DEFAULT_CLASSES
    stratify_default: tuple[str, ...] = DEFAULT_STRATIFY
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.classes:
            raise UnknownClass("taxonomy must contain at least one class")
        if any(not c for c in self.classes):
            raise UnknownClass("class names must be non-empty")
        if len(set(self.classes)) != len(self.classes):
            raise UnknownClass("class names must be unique")
        unknown = [c for c in self.stratify_default if c not in self.classes]
        if unknown:
            raise UnknownClass(f"stratify classes not in taxonomy: {unknown}")
        object.__setattr__(self, "_index", {c: i for i, c in enumerate(self.classes)})

    def __len__(self) -> int:
        return len(self.classes)

    def index_of(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise UnknownClass(f"unknown class name: {name!r}") from None

    def name_of(self, index: int) -> str:
        if not 0 <= index < len(self.classes):
            raise UnknownClass(f"class index out of range: {index}")
        return self.classes[index]

    def check_index(self, index: int) -> int:
        """Validate a class index (UNLABELED is allowed) and return it."""
        if index == UNLABELED:
            return index
        if not 0 <= index < len(self.classes):
            raise UnknownClass(f"class index out of range: {index}")
        return index

    def stratify_indices(self) -> tuple[int, ...]:
        return tuple(self._index[c] for c in self.stratify_default)


def default_taxonomy() -> Taxonomy:
    return Taxonomy()
