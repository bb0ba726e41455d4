"""On-disk interchange formats.

Binary tensors use a 16-byte little-endian header (4-byte magic, u32
height, u32 width, u32 plane count) followed by float32 row-major data:
"SSTK" for score stacks, "DPTH" for depth maps. Label maps are 8-bit
indexed PNGs whose palette follows taxonomy order with index 255 as
background. Depth exports as 16-bit grayscale PNG (d*65535, round half
up) with a separate validity PNG.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image

from .depth import DEPTH_INVALID, PseudoDepthMap
from .errors import MalformedArchive
from .labeling import LabelMap, ScoreStack
from .raster import RGBAImage
from .taxonomy import BACKGROUND, Taxonomy, class_color

SCORE_MAGIC = b"SSTK"
DEPTH_MAGIC = b"DPTH"
LABEL_BACKGROUND_INDEX = 255

PathLike = Union[str, Path]


def _write_tensor(path: PathLike, magic: bytes, planes: np.ndarray) -> None:
    h, w, n = planes.shape
    header = magic + struct.pack("<III", h, w, n)
    Path(path).write_bytes(header + planes.astype("<f4").tobytes(order="C"))


def _read_tensor(path: PathLike, magic: bytes) -> np.ndarray:
    blob = Path(path).read_bytes()
    if len(blob) < 16 or blob[:4] != magic:
        raise MalformedArchive(f"{path}: bad magic, expected {magic!r}")
    h, w, n = struct.unpack("<III", blob[4:16])
    expected = 16 + h * w * n * 4
    if len(blob) != expected:
        raise MalformedArchive(f"{path}: expected {expected} bytes, found {len(blob)}")
    data = np.frombuffer(blob, dtype="<f4", offset=16)
    return data.reshape(h, w, n).astype(np.float64)


def save_score_stack(stack: ScoreStack, path: PathLike, taxonomy: Taxonomy) -> None:
    """Write the SSTK tensor plus a JSON sidecar mapping channel -> class."""
    _write_tensor(path, SCORE_MAGIC, stack.scores)
    sidecar = {str(i): name for i, name in enumerate(taxonomy.classes)}
    Path(str(path) + ".json").write_text(
        json.dumps(sidecar, indent=2, sort_keys=True), encoding="utf-8"
    )


def load_score_stack(path: PathLike) -> ScoreStack:
    return ScoreStack(_read_tensor(path, SCORE_MAGIC))


def save_depth_tensor(dmap: PseudoDepthMap, path: PathLike) -> None:
    plane = np.where(dmap.valid, dmap.depth, DEPTH_INVALID)
    _write_tensor(path, DEPTH_MAGIC, plane[:, :, None])


def load_depth_tensor(path: PathLike) -> PseudoDepthMap:
    plane = _read_tensor(path, DEPTH_MAGIC)[:, :, 0]
    valid = plane != DEPTH_INVALID
    return PseudoDepthMap(depth=np.where(valid, plane, DEPTH_INVALID), valid=valid)


def save_depth_png(dmap: PseudoDepthMap, path: PathLike) -> None:
    """16-bit grayscale PNG: round-half-up of d*65535, 0 where invalid.

    The validity mask goes to `<stem>.valid.png` next to it.
    """
    quantized = np.floor(dmap.depth * 65535.0 + 0.5)
    quantized = np.where(dmap.valid, quantized, 0.0).astype(np.uint16)
    Image.fromarray(quantized, mode="I;16").save(path, format="PNG")
    validity = (dmap.valid.astype(np.uint8)) * 255
    Image.fromarray(validity, mode="L").save(_validity_path(path), format="PNG")


def _validity_path(path: PathLike) -> Path:
    p = Path(path)
    return p.with_suffix(".valid.png")


def load_depth_png(path: PathLike) -> PseudoDepthMap:
    with Image.open(path) as img:
        quantized = np.asarray(img, dtype=np.uint16).astype(np.float64)
    validity_file = _validity_path(path)
    if validity_file.exists():
        with Image.open(validity_file) as img:
            valid = np.asarray(img, dtype=np.uint8) > 0
    else:
        valid = np.ones(quantized.shape, dtype=bool)
    depth = np.where(valid, quantized / 65535.0, DEPTH_INVALID)
    return PseudoDepthMap(depth=depth, valid=valid)


def label_palette(taxonomy: Taxonomy) -> list[int]:
    """Flat 256-entry RGB palette: class colors, background last (black)."""
    flat: list[int] = []
    for i in range(256):
        if i < len(taxonomy):
            flat.extend(class_color(i))
        else:
            flat.extend((0, 0, 0))
    return flat


def save_label_map(label_map: LabelMap, path: PathLike, taxonomy: Taxonomy) -> None:
    indexed = label_map.labels.astype(np.int32).copy()
    indexed[indexed == BACKGROUND] = LABEL_BACKGROUND_INDEX
    img = Image.fromarray(indexed.astype(np.uint8), mode="P")
    img.putpalette(label_palette(taxonomy))
    img.save(path, format="PNG")


def load_label_map(data_or_path: Union[bytes, PathLike], n_classes: int) -> LabelMap:
    import io

    src = io.BytesIO(data_or_path) if isinstance(data_or_path, bytes) else data_or_path
    with Image.open(src) as img:
        if img.mode != "P":
            raise MalformedArchive("label map PNG must be palette-indexed")
        indexed = np.asarray(img, dtype=np.int16)
    labels = indexed.copy()
    labels[indexed == LABEL_BACKGROUND_INDEX] = BACKGROUND
    if labels.max(initial=-1) >= n_classes:
        raise MalformedArchive("label map PNG contains indices outside the taxonomy")
    return LabelMap(labels)


def save_mask_png(mask: np.ndarray, path: PathLike) -> None:
    Image.fromarray((np.asarray(mask, dtype=bool).astype(np.uint8)) * 255, mode="L").save(
        path, format="PNG"
    )


def load_mask_png(path: PathLike) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img.convert("L"), dtype=np.uint8) > 0


def image_to_png_bytes(image: RGBAImage) -> bytes:
    import io

    arr = np.clip(np.round(image.pixels * 255.0), 0, 255).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(arr, mode="RGBA").save(buf, format="PNG")
    return buf.getvalue()


def save_image_png(image: RGBAImage, path: PathLike) -> None:
    Path(path).write_bytes(image_to_png_bytes(image))


def load_image_png(path: PathLike) -> RGBAImage:
    with Image.open(path) as img:
        arr = np.asarray(img.convert("RGBA"), dtype=np.uint8)
    return RGBAImage(arr.astype(np.float64) / 255.0)
