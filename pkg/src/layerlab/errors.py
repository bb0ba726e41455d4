"""Exception hierarchy for the layerlab engine.

Every domain error derives from LayerLabError so the CLI can map any of
them to exit code 1 without enumerating subclasses.
"""

from __future__ import annotations


class LayerLabError(Exception):
    """Base class for all engine errors."""


# --- model / archive ------------------------------------------------------

class MalformedArchive(LayerLabError):
    """The container is not a readable model archive (zip/JSON level)."""


class SchemaViolation(LayerLabError):
    """A field inside model.json is missing or has the wrong shape.

    Carries the JSON path of the offending field.
    """

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class InvariantViolation(LayerLabError):
    """The archive parses but violates a model invariant (e.g. duplicate draw order)."""


class DuplicatePath(LayerLabError):
    """A dataset manifest lists the same model path twice."""


class UnknownSplit(LayerLabError):
    """A dataset manifest entry names a split other than train/val/test."""


class MissingModelFile(LayerLabError):
    """A manifest entry points at a file that does not exist under the given root."""


# --- raster ---------------------------------------------------------------

class UnknownParameter(LayerLabError):
    """apply_pose was given a deformation parameter the model does not define."""


class OutOfRange(LayerLabError):
    """A deformation parameter value lies outside [-1, 1]."""


class MissingParameter(LayerLabError):
    """The orientation grid needs AngleX and AngleY but the model lacks one."""


# --- labeling -------------------------------------------------------------

class DimensionMismatch(LayerLabError):
    """An image/stack does not match the model canvas (or its counterpart)."""


class NoLabeledMesh(LayerLabError):
    """Label propagation requires at least one labeled mesh."""


class UnknownMesh(LayerLabError):
    """A mesh id is not present in the model."""


class UnknownClass(LayerLabError):
    """A class name or index is not part of the taxonomy."""


# --- depth / layers -------------------------------------------------------

class DegenerateInput(LayerLabError):
    """Clustering input cannot be split (all values equal or too few)."""


class NoOverlap(LayerLabError):
    """Two depth maps share no jointly valid pixel."""


# --- export ---------------------------------------------------------------

class TooManyLayers(LayerLabError):
    """PSD files support at most 999 layer records."""


class IoFailure(LayerLabError):
    """Filesystem-level failure while writing an export."""
