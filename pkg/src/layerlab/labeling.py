"""Weak-label ingestion and mesh-level semantic labeling.

Pipeline order: per-class score maps are voted into mesh labels over
visible regions (seed labels), refined pixel label maps are snapped back
to fragment boundaries, and labels are propagated to fully occluded
fragments through name tokens, siblings, and ancestor groups.

Every tie-break is total (larger weight first, then lower class index),
so identical inputs always produce identical assignments.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import DimensionMismatch, NoLabeledMesh, UnknownClass, UnknownMesh
from .model import CharacterModel
from .raster import DEFAULT_TAU_VIS, VisibilityMask, visibility_masks
from .taxonomy import BACKGROUND, UNLABELED, Taxonomy

DEFAULT_TAU_BG = 0.05

_TOKEN_MIN_LEN = 3
# Boundaries between lowercase/digit and uppercase, inside acronym runs,
# and between letters and digits; names like "PartHairBack" must share
# tokens with "PartHairFront".
_CAMEL_RE = re.compile(
    r"(?<=[a-z0-9])(?=[A-Z])|(?<=[A-Z])(?=[A-Z][a-z])|(?<=[A-Za-z])(?=[0-9])|(?<=[0-9])(?=[A-Za-z])"
)
_SPLIT_RE = re.compile(r"[^A-Za-z0-9]+")


class Source(str, Enum):
    VOTE = "VOTE"
    STRING = "STRING"
    SIBLING = "SIBLING"
    PARENT = "PARENT"
    MANUAL = "MANUAL"


@dataclass(eq=False)
class ScoreStack:
    """H×W×N per-class activation maps with values in [0,1]."""

    scores: np.ndarray

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if self.scores.ndim != 3:
            raise DimensionMismatch("score stack must be H×W×N")
        if self.scores.size and (self.scores.min() < 0.0 or self.scores.max() > 1.0):
            raise ValueError("score stack values must lie in [0,1]")

    @property
    def height(self) -> int:
        return self.scores.shape[0]

    @property
    def width(self) -> int:
        return self.scores.shape[1]

    @property
    def n_classes(self) -> int:
        return self.scores.shape[2]


@dataclass(eq=False)
class LabelMap:
    """Per-pixel class indices; BACKGROUND (-1) where nothing is labeled."""

    labels: np.ndarray  # H×W int16

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int16)
        if self.labels.ndim != 2:
            raise DimensionMismatch("label map must be H×W")

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape


@dataclass(frozen=True)
class Label:
    class_index: int  # UNLABELED or a taxonomy index
    confidence: float = 0.0
    source: Optional[Source] = None

    @property
    def is_labeled(self) -> bool:
        return self.class_index != UNLABELED


@dataclass
class LabelAssignment:
    """Mesh id -> label; every model mesh id is present exactly once."""

    labels: dict[int, Label] = field(default_factory=dict)

    @classmethod
    def empty(cls, model: CharacterModel) -> "LabelAssignment":
        return cls({mid: Label(UNLABELED) for mid in model.mesh_ids()})

    @classmethod
    def from_model(cls, model: CharacterModel) -> "LabelAssignment":
        """Seed from labels baked into the model's meshes."""
        return cls({
            m.id: Label(m.label, 1.0, Source.MANUAL) if m.label != UNLABELED else Label(UNLABELED)
            for m in model.meshes
        })

    def copy(self) -> "LabelAssignment":
        return LabelAssignment(dict(self.labels))

    def class_of(self, mesh_id: int) -> int:
        return self.labels[mesh_id].class_index

    def labeled_ids(self) -> list[int]:
        return [mid for mid, lab in self.labels.items() if lab.is_labeled]

    def n_labeled(self) -> int:
        return sum(1 for lab in self.labels.values() if lab.is_labeled)

    def as_mesh_labels(self) -> dict[int, int]:
        return {mid: lab.class_index for mid, lab in self.labels.items() if lab.is_labeled}

    def to_json(self, taxonomy: Taxonomy) -> dict:
        out = {}
        for mid in sorted(self.labels):
            lab = self.labels[mid]
            out[str(mid)] = {
                "class": taxonomy.name_of(lab.class_index) if lab.is_labeled else None,
                "confidence": lab.confidence,
                "source": lab.source.value if lab.source else None,
            }
        return {"labels": out, "taxonomy": list(taxonomy.classes)}

    @classmethod
    def from_json(cls, doc: dict, taxonomy: Taxonomy) -> "LabelAssignment":
        labels = {}
        for mid_str, entry in doc.get("labels", {}).items():
            name = entry.get("class")
            index = taxonomy.index_of(name) if name is not None else UNLABELED
            source = Source(entry["source"]) if entry.get("source") else None
            labels[int(mid_str)] = Label(index, float(entry.get("confidence", 0.0)), source)
        return cls(labels)


def _check_canvas(model: CharacterModel, height: int, width: int, what: str) -> None:
    if (width, height) != model.canvas_size:
        raise DimensionMismatch(
            f"{what} is {width}x{height} but the canvas is "
            f"{model.canvas_width}x{model.canvas_height}"
        )


def _masks_by_id(masks: Sequence[VisibilityMask]) -> dict[int, np.ndarray]:
    return {m.mesh_id: m.mask for m in masks}


def vote_seed_labels(
    model: CharacterModel,
    stack: ScoreStack,
    masks: Optional[Sequence[VisibilityMask]] = None,
    tau_vis: float = DEFAULT_TAU_VIS,
) -> LabelAssignment:
    """Assign each mesh the class with the highest mean score over its
    visible region; meshes with no visible pixels stay UNLABELED.

    Ties pick the lower class index (argmax semantics). Confidence is the
    winning mean score.
    """
    _check_canvas(model, stack.height, stack.width, "score stack")
    if stack.n_classes != len(model.taxonomy):
        raise DimensionMismatch(
            f"score stack has {stack.n_classes} channels for a "
            f"{len(model.taxonomy)}-class taxonomy"
        )
    if masks is None:
        masks = visibility_masks(model, tau_vis)
    by_id = _masks_by_id(masks)
    labels: dict[int, Label] = {}
    for mesh in model.meshes:
        mask = by_id[mesh.id]
        if not mask.any():
            labels[mesh.id] = Label(UNLABELED)
            continue
        means = stack.scores[mask].mean(axis=0)
        winner = int(np.argmax(means))
        labels[mesh.id] = Label(winner, float(means[winner]), Source.VOTE)
    return LabelAssignment(labels)


def max_pool_labels(stack: ScoreStack, tau_bg: float = DEFAULT_TAU_BG) -> LabelMap:
    """Naive per-pixel argmax baseline; BACKGROUND where max score < tau_bg."""
    if not 0.0 <= tau_bg < 1.0:
        raise ValueError("tau_bg must lie in [0, 1)")
    winners = np.argmax(stack.scores, axis=2).astype(np.int16)
    peak = stack.scores.max(axis=2)
    winners[peak < tau_bg] = BACKGROUND
    return LabelMap(winners)


def snap_labels(
    model: CharacterModel,
    label_map: LabelMap,
    masks: Optional[Sequence[VisibilityMask]] = None,
    assignment: Optional[LabelAssignment] = None,
    tau_vis: float = DEFAULT_TAU_VIS,
) -> tuple[LabelMap, LabelAssignment]:
    """Snap an arbitrary pixel label map to fragment boundaries.

    Each visible fragment takes the majority non-background class over its
    visible region (tie: larger pixel count, then lower class index); the
    returned map is re-rendered from the assignment so label boundaries
    coincide exactly with visibility-mask boundaries.

    MANUAL labels in the incoming assignment are preserved, as are labels
    of fragments whose visible region is entirely background.
    """
    height, width = label_map.shape
    _check_canvas(model, height, width, "label map")
    n_classes = len(model.taxonomy)
    if label_map.labels.size and label_map.labels.max() >= n_classes:
        raise UnknownClass("label map contains indices outside the taxonomy")
    if masks is None:
        masks = visibility_masks(model, tau_vis)
    by_id = _masks_by_id(masks)
    prior = assignment if assignment is not None else LabelAssignment.empty(model)

    labels: dict[int, Label] = {}
    for mesh in model.meshes:
        previous = prior.labels.get(mesh.id, Label(UNLABELED))
        if previous.source == Source.MANUAL:
            labels[mesh.id] = previous
            continue
        values = label_map.labels[by_id[mesh.id]]
        values = values[values != BACKGROUND]
        if values.size == 0:
            labels[mesh.id] = previous
            continue
        counts = np.bincount(values, minlength=n_classes)
        winner = int(np.argmax(counts))  # ties resolve to the lower index
        labels[mesh.id] = Label(winner, float(counts[winner] / values.size), Source.VOTE)

    snapped = LabelAssignment(labels)
    return render_label_map(model, snapped, masks=masks), snapped


def render_label_map(
    model: CharacterModel,
    assignment: LabelAssignment,
    masks: Optional[Sequence[VisibilityMask]] = None,
    tau_vis: float = DEFAULT_TAU_VIS,
) -> LabelMap:
    """Per pixel, the class of the topmost visible labeled mesh.

    Painted in ascending draw order so later (frontmost) fragments win;
    unlabeled fragments paint nothing.
    """
    if masks is None:
        masks = visibility_masks(model, tau_vis)
    by_id = _masks_by_id(masks)
    out = np.full((model.canvas_height, model.canvas_width), BACKGROUND, dtype=np.int16)
    for mesh in model.meshes_by_order():
        label = assignment.labels.get(mesh.id, Label(UNLABELED))
        if label.is_labeled:
            out[by_id[mesh.id]] = label.class_index
    return LabelMap(out)


def _tokenize(name: str) -> frozenset[str]:
    spaced = _CAMEL_RE.sub(" ", name)
    return frozenset(
        t.lower() for t in _SPLIT_RE.split(spaced) if len(t) >= _TOKEN_MIN_LEN
    )


def _weighted_majority(
    candidates: Sequence[int],
    assignment: LabelAssignment,
    weights: Mapping[int, float],
    n_classes: int,
) -> Optional[tuple[int, float]]:
    """Majority class over candidate meshes, weighted by visible pixel count.

    If every candidate has zero visible area, falls back to one vote per
    mesh. Ties pick the lower class index. Returns (class, confidence) or
    None when there are no candidates.
    """
    if not candidates:
        return None
    totals = np.zeros(n_classes, dtype=np.float64)
    for mid in candidates:
        totals[assignment.class_of(mid)] += weights.get(mid, 0.0)
    if totals.sum() == 0.0:
        for mid in candidates:
            totals[assignment.class_of(mid)] += 1.0
    winner = int(np.argmax(totals))
    return winner, float(totals[winner] / totals.sum())


def _parent_prefixes(path: tuple[str, ...]) -> list[tuple[str, ...]]:
    if not path:
        return [()]
    return [path[:i] for i in range(len(path) - 1, -1, -1)]


def propagate_labels(
    model: CharacterModel,
    assignment: LabelAssignment,
    masks: Optional[Sequence[VisibilityMask]] = None,
    tau_vis: float = DEFAULT_TAU_VIS,
) -> LabelAssignment:
    """Propagate labels to UNLABELED meshes in three stages.

    1. STRING: shared name tokens with labeled meshes (case-insensitive,
       split on non-alphanumerics and camelCase boundaries, length >= 3).
    2. SIBLING: labeled meshes under the same hierarchy parent.
    3. PARENT: walk ancestors upward to the first one with a labeled
       descendant.

    Votes come from the meshes labeled before this call (stage results do
    not feed later stages), weighted by visible pixel count; already
    labeled meshes are never changed.
    """
    if assignment.n_labeled() == 0:
        raise NoLabeledMesh("propagation requires at least one labeled mesh")
    if masks is None:
        masks = visibility_masks(model, tau_vis)
    weights = {m.mesh_id: float(m.mask.sum()) for m in masks}
    n_classes = len(model.taxonomy)

    voters = [mid for mid in assignment.labels if assignment.labels[mid].is_labeled]
    voter_set = set(voters)
    tokens = {m.id: _tokenize(m.name) for m in model.meshes}
    paths = {m.id: m.hierarchy_path for m in model.meshes}

    out = assignment.copy()
    for mesh in model.meshes:
        if out.labels[mesh.id].is_labeled:
            continue

        # STRING
        mine = tokens[mesh.id]
        if mine:
            shared = [mid for mid in voters if mid != mesh.id and tokens[mid] & mine]
            result = _weighted_majority(shared, assignment, weights, n_classes)
            if result is not None:
                out.labels[mesh.id] = Label(result[0], result[1], Source.STRING)
                continue

        # SIBLING
        siblings = [
            mid for mid in voters
            if mid != mesh.id and paths[mid] == mesh.hierarchy_path
        ]
        result = _weighted_majority(siblings, assignment, weights, n_classes)
        if result is not None:
            out.labels[mesh.id] = Label(result[0], result[1], Source.SIBLING)
            continue

        # PARENT: first ancestor with at least one labeled descendant.
        for prefix in _parent_prefixes(mesh.hierarchy_path):
            descendants = [
                mid for mid in voters
                if mid != mesh.id and paths[mid][: len(prefix)] == prefix
            ]
            result = _weighted_majority(descendants, assignment, weights, n_classes)
            if result is not None:
                out.labels[mesh.id] = Label(result[0], result[1], Source.PARENT)
                break

    assert out.n_labeled() >= assignment.n_labeled()
    return out


def set_manual_label(
    assignment: LabelAssignment,
    mesh_id: int,
    class_index: int,
    taxonomy: Taxonomy,
) -> LabelAssignment:
    """Overwrite one mesh's label as a MANUAL edit (confidence 1).

    MANUAL labels are never overwritten by propagate_labels or snap_labels.
    Passing UNLABELED clears the mesh back to unlabeled.
    """
    if mesh_id not in assignment.labels:
        raise UnknownMesh(f"no mesh with id {mesh_id}")
    taxonomy.check_index(class_index)
    out = assignment.copy()
    if class_index == UNLABELED:
        out.labels[mesh_id] = Label(UNLABELED)
    else:
        out.labels[mesh_id] = Label(class_index, 1.0, Source.MANUAL)
    return out
