"""LCM archive reader/writer.

An LCM archive is a zip container holding a canonical `model.json` plus
one straight-alpha `atlas_<i>.png` per texture atlas. Serialization is
deterministic: fixed key order, shortest round-trippable floats, zeroed
zip timestamps, so serializing the same model twice yields identical
bytes.
"""

from __future__ import annotations

import io
import json
import zipfile
from pathlib import Path
from typing import Optional, Union

import numpy as np
from PIL import Image

from .errors import MalformedArchive, SchemaViolation
from .model import (
    ArtMesh,
    CharacterModel,
    DatasetManifest,
    DeformParameter,
    ManifestEntry,
    TextureAtlas,
)
from .taxonomy import UNLABELED, DEFAULT_STRATIFY, Taxonomy

_ZIP_EPOCH = (1980, 1, 1, 0, 0, 0)


def _require(obj: dict, key: str, path: str):
    if key not in obj:
        raise SchemaViolation(f"{path}.{key}", "missing required field")
    return obj[key]


def _as_int(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaViolation(path, f"expected integer, got {type(value).__name__}")
    return value


def _as_number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaViolation(path, f"expected number, got {type(value).__name__}")
    return float(value)


def _as_str(value, path: str) -> str:
    if not isinstance(value, str):
        raise SchemaViolation(path, f"expected string, got {type(value).__name__}")
    return value


def _as_list(value, path: str) -> list:
    if not isinstance(value, list):
        raise SchemaViolation(path, f"expected array, got {type(value).__name__}")
    return value


def _pair_array(value, path: str) -> np.ndarray:
    rows = _as_list(value, path)
    out = np.empty((len(rows), 2), dtype=np.float64)
    for i, row in enumerate(rows):
        pair = _as_list(row, f"{path}[{i}]")
        if len(pair) != 2:
            raise SchemaViolation(f"{path}[{i}]", "expected a pair [x, y]")
        out[i, 0] = _as_number(pair[0], f"{path}[{i}][0]")
        out[i, 1] = _as_number(pair[1], f"{path}[{i}][1]")
    return out


def _parse_mesh(obj: dict, i: int, taxonomy: Taxonomy) -> ArtMesh:
    path = f"meshes[{i}]"
    if not isinstance(obj, dict):
        raise SchemaViolation(path, "expected object")
    tris_raw = _as_list(_require(obj, "triangles", path), f"{path}.triangles")
    tris = np.empty((len(tris_raw), 3), dtype=np.int64)
    for t, tri in enumerate(tris_raw):
        tri = _as_list(tri, f"{path}.triangles[{t}]")
        if len(tri) != 3:
            raise SchemaViolation(f"{path}.triangles[{t}]", "expected a triple")
        tris[t] = [_as_int(v, f"{path}.triangles[{t}][{k}]") for k, v in enumerate(tri)]
    label_name = obj.get("label")
    if label_name is None:
        label = UNLABELED
    else:
        label = taxonomy.index_of(_as_str(label_name, f"{path}.label"))
    hier = [_as_str(g, f"{path}.path[{k}]")
            for k, g in enumerate(_as_list(_require(obj, "path", path), f"{path}.path"))]
    return ArtMesh(
        id=_as_int(_require(obj, "id", path), f"{path}.id"),
        name=_as_str(_require(obj, "name", path), f"{path}.name"),
        hierarchy_path=tuple(hier),
        vertices=_pair_array(_require(obj, "vertices", path), f"{path}.vertices"),
        uvs=_pair_array(_require(obj, "uvs", path), f"{path}.uvs"),
        triangles=tris,
        texture_index=_as_int(_require(obj, "texture", path), f"{path}.texture"),
        draw_order=_as_int(_require(obj, "drawOrder", path), f"{path}.drawOrder"),
        opacity=_as_number(obj.get("opacity", 1.0), f"{path}.opacity"),
        label=label,
    )


def _parse_parameter(obj: dict, i: int, mesh_ids: set[int]) -> DeformParameter:
    path = f"parameters[{i}]"
    if not isinstance(obj, dict):
        raise SchemaViolation(path, "expected object")
    keyframes = _require(obj, "keyframes", path)
    if not isinstance(keyframes, dict):
        raise SchemaViolation(f"{path}.keyframes", "expected object")
    banks: dict[str, dict[int, np.ndarray]] = {"-1": {}, "1": {}}
    for key, bank in keyframes.items():
        if key not in ("-1", "0", "1"):
            raise SchemaViolation(f"{path}.keyframes.{key}", "keyframe must be -1, 0 or 1")
        if not isinstance(bank, dict):
            raise SchemaViolation(f"{path}.keyframes.{key}", "expected object")
        for mid_str, offsets in bank.items():
            kpath = f"{path}.keyframes.{key}.{mid_str}"
            try:
                mid = int(mid_str)
            except ValueError:
                raise SchemaViolation(kpath, "mesh id key must be an integer") from None
            if mid not in mesh_ids:
                raise SchemaViolation(kpath, f"unknown mesh id {mid}")
            arr = _pair_array(offsets, kpath)
            if key == "0":
                if np.any(arr != 0.0):
                    raise SchemaViolation(kpath, "keyframe at 0 must be all-zero offsets")
            else:
                banks[key][mid] = arr
    return DeformParameter(
        name=_as_str(_require(obj, "name", path), f"{path}.name"),
        offsets_neg=banks["-1"],
        offsets_pos=banks["1"],
    )


def parse_model(data: Union[bytes, str, Path], retie: bool = False) -> CharacterModel:
    """Parse an LCM archive (bytes or a filesystem path) into a CharacterModel.

    With retie=True, duplicate draw orders are replaced by the rank of
    (draw_order, mesh id), which preserves relative order and breaks ties
    by mesh id ascending.
    """
    if isinstance(data, (str, Path)):
        data = Path(data).read_bytes()
    try:
        zf = zipfile.ZipFile(io.BytesIO(data))
    except zipfile.BadZipFile as e:
        raise MalformedArchive(f"not a zip archive: {e}") from e
    names = set(zf.namelist())
    if "model.json" not in names:
        raise MalformedArchive("archive does not contain model.json")
    try:
        doc = json.loads(zf.read("model.json").decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise MalformedArchive(f"model.json is not valid UTF-8 JSON: {e}") from e
    if not isinstance(doc, dict):
        raise MalformedArchive("model.json top level must be an object")

    canvas = _require(doc, "canvas", "$")
    if not isinstance(canvas, dict):
        raise SchemaViolation("$.canvas", "expected object")
    width = _as_int(_require(canvas, "width", "$.canvas"), "$.canvas.width")
    height = _as_int(_require(canvas, "height", "$.canvas"), "$.canvas.height")

    tax_list = _as_list(_require(doc, "taxonomy", "$"), "$.taxonomy")
    classes = tuple(_as_str(c, f"$.taxonomy[{i}]") for i, c in enumerate(tax_list))
    stratify = doc.get("stratify")
    if stratify is None:
        stratify_classes = tuple(c for c in DEFAULT_STRATIFY if c in classes)
    else:
        stratify_classes = tuple(
            _as_str(c, f"$.stratify[{i}]") for i, c in enumerate(_as_list(stratify, "$.stratify"))
        )
    taxonomy = Taxonomy(classes=classes, stratify_default=stratify_classes)

    atlases = []
    for i, entry in enumerate(_as_list(_require(doc, "atlases", "$"), "$.atlases")):
        if not isinstance(entry, dict):
            raise SchemaViolation(f"$.atlases[{i}]", "expected object")
        png_name = _as_str(_require(entry, "path", f"$.atlases[{i}]"), f"$.atlases[{i}].path")
        if png_name not in names:
            raise MalformedArchive(f"archive missing atlas file {png_name}")
        with Image.open(io.BytesIO(zf.read(png_name))) as img:
            rgba = np.asarray(img.convert("RGBA"), dtype=np.uint8)
        atlases.append(TextureAtlas(width=rgba.shape[1], height=rgba.shape[0], pixels=rgba))

    meshes = [
        _parse_mesh(m, i, taxonomy)
        for i, m in enumerate(_as_list(_require(doc, "meshes", "$"), "$.meshes"))
    ]
    if retie:
        ranked = sorted(meshes, key=lambda m: (m.draw_order, m.id))
        for rank, mesh in enumerate(ranked):
            mesh.draw_order = rank

    mesh_ids = {m.id for m in meshes}
    parameters = [
        _parse_parameter(p, i, mesh_ids)
        for i, p in enumerate(_as_list(doc.get("parameters", []), "$.parameters"))
    ]
    metadata = doc.get("metadata", {})
    if not isinstance(metadata, dict):
        raise SchemaViolation("$.metadata", "expected object")

    return CharacterModel(
        canvas_width=width,
        canvas_height=height,
        atlases=atlases,
        meshes=meshes,
        parameters=parameters,
        taxonomy=taxonomy,
        metadata=metadata,
    )


def _offsets_json(offsets: dict[int, np.ndarray]) -> dict:
    return {
        str(mid): [[float(x), float(y)] for x, y in offsets[mid]]
        for mid in sorted(offsets)
    }


def _model_json(model: CharacterModel) -> dict:
    meshes = []
    for m in model.meshes:
        entry = {
            "id": m.id,
            "name": m.name,
            "path": list(m.hierarchy_path),
            "vertices": [[float(x), float(y)] for x, y in m.vertices],
            "uvs": [[float(u), float(v)] for u, v in m.uvs],
            "triangles": [[int(a), int(b), int(c)] for a, b, c in m.triangles],
            "texture": m.texture_index,
            "drawOrder": m.draw_order,
            "opacity": float(m.opacity),
        }
        if m.label != UNLABELED:
            entry["label"] = model.taxonomy.name_of(m.label)
        meshes.append(entry)
    doc = {
        "canvas": {"width": model.canvas_width, "height": model.canvas_height},
        "atlases": [{"path": f"atlas_{i}.png"} for i in range(len(model.atlases))],
        "meshes": meshes,
        "parameters": [
            {
                "name": p.name,
                "keyframes": {
                    "-1": _offsets_json(p.offsets_neg),
                    "1": _offsets_json(p.offsets_pos),
                },
            }
            for p in model.parameters
        ],
        "taxonomy": list(model.taxonomy.classes),
        "stratify": list(model.taxonomy.stratify_default),
    }
    if model.metadata:
        doc["metadata"] = model.metadata
    return doc


def serialize_model(model: CharacterModel) -> bytes:
    """Serialize a model to deterministic LCM archive bytes."""
    doc = json.dumps(_model_json(model), ensure_ascii=False, separators=(",", ":"))
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        info = zipfile.ZipInfo("model.json", date_time=_ZIP_EPOCH)
        info.compress_type = zipfile.ZIP_DEFLATED
        zf.writestr(info, doc.encode("utf-8"))
        for i, atlas in enumerate(model.atlases):
            png = io.BytesIO()
            Image.fromarray(atlas.pixels, mode="RGBA").save(png, format="PNG")
            info = zipfile.ZipInfo(f"atlas_{i}.png", date_time=_ZIP_EPOCH)
            info.compress_type = zipfile.ZIP_DEFLATED
            zf.writestr(info, png.getvalue())
    return buf.getvalue()


def save_model(model: CharacterModel, path: Union[str, Path]) -> None:
    Path(path).write_bytes(serialize_model(model))


def load_manifest(path: Union[str, Path]) -> DatasetManifest:
    """Read a JSON-lines dataset manifest."""
    entries = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise MalformedArchive(f"manifest line {lineno}: invalid JSON: {e}") from e
        entries.append(
            ManifestEntry(
                path=_as_str(_require(obj, "path", f"line {lineno}"), f"line {lineno}.path"),
                split=_as_str(_require(obj, "split", f"line {lineno}"), f"line {lineno}.split"),
                pose=_as_str(obj.get("pose", "x0y0"), f"line {lineno}.pose"),
            )
        )
    return DatasetManifest(entries=entries)


def save_manifest(manifest: DatasetManifest, path: Union[str, Path]) -> None:
    lines = [
        json.dumps({"path": e.path, "split": e.split, "pose": e.pose},
                   ensure_ascii=False, separators=(",", ":"))
        for e in manifest.entries
    ]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
