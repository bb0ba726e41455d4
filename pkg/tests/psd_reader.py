"""Minimal independent PSD reader used to verify exported files.

Written against the published format layout, independently of the
package's writer: big-endian struct walking, RLE row decoding via its own
PackBits interpreter.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np


@dataclass
class PsdLayer:
    name: str
    rect: tuple[int, int, int, int]  # top, left, bottom, right
    channels: dict[int, np.ndarray]  # channel id -> H×W uint8

    @property
    def rgba(self) -> np.ndarray:
        return np.stack([self.channels[0], self.channels[1], self.channels[2],
                         self.channels[-1]], axis=2)


@dataclass
class PsdFile:
    width: int
    height: int
    n_channels: int
    layers: list[PsdLayer]
    composite: np.ndarray  # H×W×channels uint8


def _unpackbits(data: bytes, expected: int) -> bytes:
    out = bytearray()
    pos = 0
    while len(out) < expected:
        if pos >= len(data):
            raise ValueError("PackBits stream truncated")
        ctrl = data[pos]
        pos += 1
        if ctrl == 128:
            continue
        if ctrl < 128:
            out += data[pos : pos + ctrl + 1]
            pos += ctrl + 1
        else:
            out += bytes([data[pos]]) * (257 - ctrl)
            pos += 1
    if len(out) != expected:
        raise ValueError("PackBits row overrun")
    return bytes(out)


def _read_rle_plane(blob: bytes, pos: int, rows: int, cols: int) -> tuple[np.ndarray, int]:
    counts = struct.unpack(f">{rows}H", blob[pos : pos + 2 * rows])
    pos += 2 * rows
    plane = np.empty((rows, cols), dtype=np.uint8)
    for y, count in enumerate(counts):
        plane[y] = np.frombuffer(_unpackbits(blob[pos : pos + count], cols), dtype=np.uint8)
        pos += count
    return plane, pos


def read_psd(path) -> PsdFile:
    blob = open(path, "rb").read()
    if blob[:4] != b"8BPS":
        raise ValueError("not a PSD file")
    version, = struct.unpack(">H", blob[4:6])
    if version != 1:
        raise ValueError(f"unsupported PSD version {version}")
    n_channels, height, width, depth, color_mode = struct.unpack(">HIIHH", blob[12:26])
    if depth != 8 or color_mode != 3:
        raise ValueError("expected 8-bit RGB")
    pos = 26
    color_len, = struct.unpack(">I", blob[pos : pos + 4]); pos += 4 + color_len
    res_len, = struct.unpack(">I", blob[pos : pos + 4]); pos += 4 + res_len
    lm_len, = struct.unpack(">I", blob[pos : pos + 4]); pos += 4
    lm_end = pos + lm_len

    layers: list[PsdLayer] = []
    if lm_len:
        li_len, = struct.unpack(">I", blob[pos : pos + 4]); pos += 4
        li_end = pos + li_len
        count, = struct.unpack(">h", blob[pos : pos + 2]); pos += 2
        count = abs(count)
        records = []
        for _ in range(count):
            top, left, bottom, right = struct.unpack(">iiii", blob[pos : pos + 16]); pos += 16
            n_ch, = struct.unpack(">H", blob[pos : pos + 2]); pos += 2
            chans = []
            for _ in range(n_ch):
                cid, clen = struct.unpack(">hI", blob[pos : pos + 6]); pos += 6
                chans.append((cid, clen))
            sig = blob[pos : pos + 4]; pos += 4
            if sig != b"8BIM":
                raise ValueError("bad blend signature")
            pos += 4  # blend key
            pos += 4  # opacity, clipping, flags, filler
            extra_len, = struct.unpack(">I", blob[pos : pos + 4]); pos += 4
            extra_end = pos + extra_len
            mask_len, = struct.unpack(">I", blob[pos : pos + 4]); pos += 4 + mask_len
            ranges_len, = struct.unpack(">I", blob[pos : pos + 4]); pos += 4 + ranges_len
            name_len = blob[pos]
            name = blob[pos + 1 : pos + 1 + name_len].decode("ascii")
            pos = extra_end
            records.append((name, (top, left, bottom, right), chans))
        for name, rect, chans in records:
            rows = rect[2] - rect[0]
            cols = rect[3] - rect[1]
            channels = {}
            for cid, clen in chans:
                block_end = pos + clen
                compression, = struct.unpack(">H", blob[pos : pos + 2])
                if compression != 1:
                    raise ValueError("expected RLE channels")
                plane, _ = _read_rle_plane(blob, pos + 2, rows, cols)
                channels[cid] = plane
                pos = block_end
            layers.append(PsdLayer(name=name, rect=rect, channels=channels))
        pos = li_end
    pos = lm_end

    compression, = struct.unpack(">H", blob[pos : pos + 2]); pos += 2
    if compression != 1:
        raise ValueError("expected RLE composite")
    counts_needed = n_channels * height
    counts = struct.unpack(f">{counts_needed}H", blob[pos : pos + 2 * counts_needed])
    pos += 2 * counts_needed
    planes = []
    i = 0
    for _c in range(n_channels):
        plane = np.empty((height, width), dtype=np.uint8)
        for y in range(height):
            plane[y] = np.frombuffer(
                _unpackbits(blob[pos : pos + counts[i]], width), dtype=np.uint8
            )
            pos += counts[i]
            i += 1
        planes.append(plane)
    composite = np.stack(planes, axis=2)
    return PsdFile(width=width, height=height, n_channels=n_channels,
                   layers=layers, composite=composite)
