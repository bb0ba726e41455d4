"""Core data model: meshes, atlases, deformation parameters, manifests.

A CharacterModel is immutable after construction/parsing and safe to
share across threads; pose deformation returns a new model.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterator, Optional

import numpy as np

from .errors import (
    DuplicatePath,
    InvariantViolation,
    MissingModelFile,
    UnknownMesh,
    UnknownSplit,
)
from .taxonomy import UNLABELED, Taxonomy

SPLITS = ("train", "val", "test")


@dataclass(eq=False)
class TextureAtlas:
    """Straight-alpha RGBA atlas, 8-bit channels stored as uint8 H×W×4."""

    width: int
    height: int
    pixels: np.ndarray

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise InvariantViolation("atlas dimensions must be >= 1")
        if self.pixels.shape != (self.height, self.width, 4):
            raise InvariantViolation(
                f"atlas pixel array shape {self.pixels.shape} does not match "
                f"{self.height}x{self.width}x4"
            )
        if self.pixels.dtype != np.uint8:
            raise InvariantViolation("atlas pixels must be uint8")

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, TextureAtlas)
            and self.width == other.width
            and self.height == other.height
            and np.array_equal(self.pixels, other.pixels)
        )


@dataclass(eq=False)
class ArtMesh:
    """One drawing fragment: triangulated 2D mesh textured from an atlas."""

    id: int
    name: str
    hierarchy_path: tuple[str, ...]
    vertices: np.ndarray  # V×2, canvas pixel units
    uvs: np.ndarray  # V×2, normalized [0,1]
    triangles: np.ndarray  # T×3 vertex indices
    texture_index: int
    draw_order: int
    opacity: float = 1.0
    label: int = UNLABELED

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 2)
        self.uvs = np.asarray(self.uvs, dtype=np.float64).reshape(-1, 2)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        self.hierarchy_path = tuple(self.hierarchy_path)
        if len(self.uvs) != len(self.vertices):
            raise InvariantViolation(
                f"mesh {self.id}: {len(self.uvs)} uvs for {len(self.vertices)} vertices"
            )
        if len(self.triangles) and self.triangles.max() >= len(self.vertices):
            raise InvariantViolation(f"mesh {self.id}: triangle index out of range")
        if len(self.triangles) and self.triangles.min() < 0:
            raise InvariantViolation(f"mesh {self.id}: negative triangle index")
        if not 0.0 <= self.opacity <= 1.0:
            raise InvariantViolation(f"mesh {self.id}: opacity outside [0,1]")

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, ArtMesh)
            and self.id == other.id
            and self.name == other.name
            and self.hierarchy_path == other.hierarchy_path
            and np.array_equal(self.vertices, other.vertices)
            and np.array_equal(self.uvs, other.uvs)
            and np.array_equal(self.triangles, other.triangles)
            and self.texture_index == other.texture_index
            and self.draw_order == other.draw_order
            and self.opacity == other.opacity
            and self.label == other.label
        )


@dataclass(eq=False)
class DeformParameter:
    """Three-keyframe vertex offset track; value in [-1,1], linear in between.

    Offsets are keyed by mesh id; the keyframe at 0 is implicitly zero.
    """

    name: str
    offsets_neg: dict[int, np.ndarray] = field(default_factory=dict)  # mesh id -> V×2
    offsets_pos: dict[int, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.offsets_neg = {
            int(k): np.asarray(v, dtype=np.float64).reshape(-1, 2)
            for k, v in self.offsets_neg.items()
        }
        self.offsets_pos = {
            int(k): np.asarray(v, dtype=np.float64).reshape(-1, 2)
            for k, v in self.offsets_pos.items()
        }

    def __eq__(self, other) -> bool:
        if not isinstance(other, DeformParameter) or self.name != other.name:
            return False
        for mine, theirs in ((self.offsets_neg, other.offsets_neg),
                             (self.offsets_pos, other.offsets_pos)):
            if mine.keys() != theirs.keys():
                return False
            if any(not np.array_equal(mine[k], theirs[k]) for k in mine):
                return False
        return True


@dataclass(eq=False)
class CharacterModel:
    """A layered character: canvas, atlases, meshes, deformations, taxonomy."""

    canvas_width: int
    canvas_height: int
    atlases: list[TextureAtlas]
    meshes: list[ArtMesh]
    parameters: list[DeformParameter] = field(default_factory=list)
    taxonomy: Taxonomy = field(default_factory=Taxonomy)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.validate()
        self._by_id = {m.id: m for m in self.meshes}

    def validate(self) -> None:
        if self.canvas_width < 1 or self.canvas_height < 1:
            raise InvariantViolation("canvas dimensions must be >= 1")
        if not self.meshes:
            raise InvariantViolation("model must contain at least one mesh")
        ids = [m.id for m in self.meshes]
        if len(set(ids)) != len(ids):
            raise InvariantViolation("mesh ids must be unique")
        orders = [m.draw_order for m in self.meshes]
        if len(set(orders)) != len(orders):
            dupes = sorted({z for z in orders if orders.count(z) > 1})
            raise InvariantViolation(f"duplicate draw_order values: {dupes}")
        for m in self.meshes:
            if not 0 <= m.texture_index < len(self.atlases):
                raise InvariantViolation(
                    f"mesh {m.id}: texture index {m.texture_index} out of range"
                )
            self.taxonomy.check_index(m.label)
        for p in self.parameters:
            for offsets in (p.offsets_neg, p.offsets_pos):
                for mesh_id, arr in offsets.items():
                    mesh = next((m for m in self.meshes if m.id == mesh_id), None)
                    if mesh is None:
                        raise InvariantViolation(
                            f"parameter {p.name}: offsets for unknown mesh {mesh_id}"
                        )
                    if arr.shape != mesh.vertices.shape:
                        raise InvariantViolation(
                            f"parameter {p.name}: offset shape {arr.shape} does not "
                            f"match mesh {mesh_id} vertices {mesh.vertices.shape}"
                        )

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, CharacterModel)
            and self.canvas_width == other.canvas_width
            and self.canvas_height == other.canvas_height
            and self.atlases == other.atlases
            and self.meshes == other.meshes
            and self.parameters == other.parameters
            and self.taxonomy.classes == other.taxonomy.classes
            and self.taxonomy.stratify_default == other.taxonomy.stratify_default
            and self.metadata == other.metadata
        )

    @property
    def canvas_size(self) -> tuple[int, int]:
        return self.canvas_width, self.canvas_height

    def mesh(self, mesh_id: int) -> ArtMesh:
        try:
            return self._by_id[mesh_id]
        except KeyError:
            raise UnknownMesh(f"no mesh with id {mesh_id}") from None

    def mesh_ids(self) -> list[int]:
        return [m.id for m in self.meshes]

    def meshes_by_order(self) -> list[ArtMesh]:
        """Meshes sorted back-to-front (ascending draw order)."""
        return sorted(self.meshes, key=lambda m: m.draw_order)

    def parameter(self, name: str) -> Optional[DeformParameter]:
        return next((p for p in self.parameters if p.name == name), None)

    def hierarchy_groups(self) -> set[tuple[str, ...]]:
        """All groups implied by mesh paths (prefix-closed by construction)."""
        groups: set[tuple[str, ...]] = {()}
        for m in self.meshes:
            for i in range(1, len(m.hierarchy_path) + 1):
                groups.add(m.hierarchy_path[:i])
        return groups

    def with_labels(self, labels: dict[int, int]) -> "CharacterModel":
        """New model with mesh labels replaced from a mesh-id -> class map."""
        new_meshes = []
        for m in self.meshes:
            if m.id in labels:
                new_meshes.append(replace(m, label=self.taxonomy.check_index(labels[m.id])))
            else:
                new_meshes.append(m)
        return CharacterModel(
            canvas_width=self.canvas_width,
            canvas_height=self.canvas_height,
            atlases=self.atlases,
            meshes=new_meshes,
            parameters=self.parameters,
            taxonomy=self.taxonomy,
            metadata=self.metadata,
        )


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    split: str
    pose: str = "x0y0"


@dataclass
class DatasetManifest:
    """Dataset index: one (model path, split, pose id) entry per line."""

    entries: list[ManifestEntry] = field(default_factory=list)

    def __iter__(self) -> Iterator[ManifestEntry]:
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)


def validate_manifest(
    manifest: DatasetManifest, root: Optional[str] = None
) -> tuple[int, int, int]:
    """Check manifest invariants and return (n_train, n_val, n_test).

    With a root directory, every listed path must exist beneath it.
    """
    from pathlib import Path

    seen: set[str] = set()
    counts = {s: 0 for s in SPLITS}
    for entry in manifest.entries:
        if entry.split not in SPLITS:
            raise UnknownSplit(f"unknown split {entry.split!r} for {entry.path}")
        if entry.path in seen:
            raise DuplicatePath(f"duplicate manifest path: {entry.path}")
        seen.add(entry.path)
        counts[entry.split] += 1
        if root is not None and not (Path(root) / entry.path).exists():
            raise MissingModelFile(f"manifest path not found under {root}: {entry.path}")
    return counts["train"], counts["val"], counts["test"]
