"""Layered PSD (version 1) file writer.

Produces RGB-mode, 8-bit files: one named layer per semantic layer (or
per depth stratum), RLE ("PackBits") channel compression, and a flattened
RGBA composite in the image data section. Layers are written bottom-to-top
ordered by representative depth (median in-mask depth). All multi-byte
integers are big-endian per the format convention.

Channel data blocks are padded to even length so parity-sensitive readers
stay aligned.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .depth import BACK, FRONT, PseudoDepthMap, Strata
from .errors import DimensionMismatch, IoFailure, TooManyLayers
from .layers import SemanticLayer
from .model import CharacterModel
from .raster import render_composite
from .taxonomy import Taxonomy

MAX_LAYERS = 999
_SIGNATURE = b"8BPS"
_BLEND_NORMAL = b"8BIMnorm"
_CHANNEL_IDS = (0, 1, 2, -1)  # R, G, B, A


@dataclass
class PsdLayerEntry:
    """One layer to be written: name, 8-bit RGBA pixels, sort depth."""

    name: str
    rgba: np.ndarray  # H×W×4 uint8
    depth: float


def packbits_encode(row: np.ndarray) -> bytes:
    """PackBits-compress one row of bytes.

    Runs of two or more equal bytes become repeat packets (control
    257-count, count up to 128); everything else accumulates into literal
    packets of up to 128 bytes.
    """
    data = row.tobytes()
    n = len(data)
    out = bytearray()
    literal_start = 0
    i = 0

    def flush_literal(end: int) -> None:
        start = literal_start
        while start < end:
            chunk = data[start : min(start + 128, end)]
            out.append(len(chunk) - 1)
            out.extend(chunk)
            start += len(chunk)

    while i < n:
        run = 1
        while i + run < n and data[i + run] == data[i] and run < 128:
            run += 1
        if run >= 2:
            flush_literal(i)
            out.append(257 - run)
            out.append(data[i])
            i += run
            literal_start = i
        else:
            i += 1
    flush_literal(n)
    return bytes(out)


def packbits_decode(data: bytes, expected: int) -> bytes:
    """Inverse of packbits_encode (also accepts any valid PackBits stream)."""
    out = bytearray()
    i = 0
    while i < len(data) and len(out) < expected:
        control = data[i]
        i += 1
        if control == 128:
            continue
        if control < 128:
            count = control + 1
            out.extend(data[i : i + count])
            i += count
        else:
            count = 257 - control
            out.extend(bytes([data[i]]) * count)
            i += 1
    if len(out) != expected:
        raise ValueError(f"PackBits stream decoded to {len(out)} bytes, expected {expected}")
    return bytes(out)


def _rle_channel_block(plane: np.ndarray) -> bytes:
    """Compression marker + row byte counts + packed rows, padded to even."""
    rows = [packbits_encode(plane[y]) for y in range(plane.shape[0])]
    block = bytearray(struct.pack(">H", 1))
    for row in rows:
        block += struct.pack(">H", len(row))
    for row in rows:
        block += row
    if len(block) % 2:
        block += b"\x00"
    return bytes(block)


def _pascal_name(name: str) -> bytes:
    raw = name.encode("ascii", errors="replace")[:255]
    out = bytes([len(raw)]) + raw
    while len(out) % 4:
        out += b"\x00"
    return out


def _layer_record(
    entry: PsdLayerEntry, width: int, height: int, channel_lengths: Sequence[int]
) -> bytes:
    rec = bytearray()
    rec += struct.pack(">iiii", 0, 0, height, width)
    rec += struct.pack(">H", len(_CHANNEL_IDS))
    for cid, clen in zip(_CHANNEL_IDS, channel_lengths):
        rec += struct.pack(">hI", cid, clen)
    rec += _BLEND_NORMAL
    rec += struct.pack(">BBBB", 255, 0, 0, 0)  # opacity, clipping, flags, filler
    extra = struct.pack(">I", 0) + struct.pack(">I", 0) + _pascal_name(entry.name)
    rec += struct.pack(">I", len(extra))
    rec += extra
    return bytes(rec)


def write_psd(
    path,
    width: int,
    height: int,
    entries: Sequence[PsdLayerEntry],
    composite: Optional[np.ndarray] = None,
) -> None:
    """Write a layered PSD file; entries are sorted by depth internally.

    `composite` (H×W×4 uint8) defaults to the 'over' flatten of the
    depth-sorted entries.
    """
    if not entries:
        raise TooManyLayers("a PSD needs at least one layer")
    if len(entries) > MAX_LAYERS:
        raise TooManyLayers(f"{len(entries)} layers exceed the PSD limit of {MAX_LAYERS}")
    for entry in entries:
        if entry.rgba.shape != (height, width, 4) or entry.rgba.dtype != np.uint8:
            raise DimensionMismatch(
                f"layer {entry.name!r} must be {height}x{width}x4 uint8"
            )

    ordered = sorted(entries, key=lambda e: e.depth)  # bottom-to-top
    if composite is None:
        composite = _flatten(ordered, width, height)

    channel_blocks: list[list[bytes]] = []
    for entry in ordered:
        blocks = [
            _rle_channel_block(entry.rgba[:, :, c])
            for c in (0, 1, 2, 3)
        ]
        channel_blocks.append(blocks)

    layer_info = bytearray()
    layer_info += struct.pack(">h", len(ordered))
    for entry, blocks in zip(ordered, channel_blocks):
        layer_info += _layer_record(entry, width, height, [len(b) for b in blocks])
    for blocks in channel_blocks:
        for block in blocks:
            layer_info += block
    if len(layer_info) % 2:
        layer_info += b"\x00"

    layer_mask_section = struct.pack(">I", len(layer_info)) + layer_info
    layer_mask_section += struct.pack(">I", 0)  # empty global layer mask info

    out = bytearray()
    out += _SIGNATURE
    out += struct.pack(">H", 1)
    out += b"\x00" * 6
    out += struct.pack(">HIIHH", 4, height, width, 8, 3)  # channels, h, w, depth, RGB
    out += struct.pack(">I", 0)  # color mode data
    out += struct.pack(">I", 0)  # image resources
    out += struct.pack(">I", len(layer_mask_section))
    out += layer_mask_section

    # Image data: RLE, row byte counts for all channels first, then rows.
    planes = [composite[:, :, c] for c in (0, 1, 2, 3)]
    packed = [[packbits_encode(plane[y]) for y in range(height)] for plane in planes]
    out += struct.pack(">H", 1)
    for rows in packed:
        for row in rows:
            out += struct.pack(">H", len(row))
    for rows in packed:
        for row in rows:
            out += row

    try:
        with open(path, "wb") as fh:
            fh.write(out)
    except OSError as e:
        raise IoFailure(f"cannot write PSD to {path}: {e}") from e


def _flatten(ordered: Sequence[PsdLayerEntry], width: int, height: int) -> np.ndarray:
    acc_rgb = np.zeros((height, width, 3), dtype=np.float64)
    acc_a = np.zeros((height, width), dtype=np.float64)
    for entry in ordered:
        rgba = entry.rgba.astype(np.float64) / 255.0
        a = rgba[:, :, 3]
        acc_rgb = rgba[:, :, :3] * a[:, :, None] + acc_rgb * (1.0 - a)[:, :, None]
        acc_a = a + acc_a * (1.0 - a)
    with np.errstate(invalid="ignore", divide="ignore"):
        rgb = np.where(acc_a[:, :, None] > 0.0,
                       acc_rgb / np.where(acc_a == 0.0, 1.0, acc_a)[:, :, None],
                       0.0)
    out = np.concatenate([rgb, acc_a[:, :, None]], axis=2)
    return np.clip(np.round(out * 255.0), 0, 255).astype(np.uint8)


def _to_uint8(rgb: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    rgba = np.concatenate([rgb, alpha[:, :, None]], axis=2)
    return np.clip(np.round(rgba * 255.0), 0, 255).astype(np.uint8)


def _median_depth(dmap: PseudoDepthMap, region: np.ndarray, fallback: float) -> float:
    values = dmap.depth[region & dmap.valid]
    if values.size == 0:
        return fallback
    return float(np.median(values))


def export_psd(
    layers: Sequence[SemanticLayer],
    depth_maps: Sequence[PseudoDepthMap],
    taxonomy: Taxonomy,
    path,
    strata: Optional[dict[int, Strata]] = None,
    model: Optional[CharacterModel] = None,
) -> list[str]:
    """Export semantic layers as a layered PSD; returns written layer names.

    Layers with an empty alpha are skipped. For classes with strata, the
    class layer is replaced by "<class>_back"/"<class>_front" sublayers;
    with the source model available the sublayers are re-rendered from the
    stratum's meshes (complete content), otherwise the flat layer is cut
    by the per-pixel stratum assignment.
    """
    strata = strata or {}
    entries: list[PsdLayerEntry] = []
    height = width = None
    for layer, dmap in zip(layers, depth_maps):
        if not (layer.alpha > 0.0).any():
            warnings.warn(f"skipping empty layer {taxonomy.name_of(layer.class_index)!r}")
            continue
        height, width = layer.alpha.shape
        name = taxonomy.name_of(layer.class_index)
        split = strata.get(layer.class_index)
        if split is not None and split.is_split:
            for stratum, suffix, mesh_ids in (
                (BACK, "_back", split.back_mesh_ids),
                (FRONT, "_front", split.front_mesh_ids),
            ):
                region = split.assignments == stratum
                if model is not None and mesh_ids:
                    image = render_composite(model, visible=mesh_ids)
                    rgba = _to_uint8(image.rgb, image.alpha)
                elif region.any():
                    cut_alpha = np.where(region, layer.alpha, 0.0)
                    rgba = _to_uint8(layer.rgb, cut_alpha)
                else:
                    continue
                depth = _median_depth(dmap, region, split.centroids[stratum])
                entries.append(PsdLayerEntry(name=name + suffix, rgba=rgba, depth=depth))
        else:
            depth = _median_depth(dmap, layer.alpha > 0.0, 0.0)
            entries.append(PsdLayerEntry(name=name, rgba=_to_uint8(layer.rgb, layer.alpha), depth=depth))
    if not entries:
        raise TooManyLayers("no non-empty layers to export")
    write_psd(path, width, height, entries)
    return [e.name for e in sorted(entries, key=lambda e: e.depth)]
