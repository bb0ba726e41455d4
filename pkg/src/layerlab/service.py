"""Local annotation service: a thin HTTP shell over the library.

Every mutation endpoint is equivalent to the corresponding library call
on the session's assignment; the CharacterModel itself is never mutated.
Renders are cached by visible-set hash because visibility toggling is the
UI's hot path.
"""

from __future__ import annotations

import io
import tempfile
from collections import OrderedDict
from pathlib import Path
from threading import Lock
from typing import Optional

from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from .depth import render_depth_map
from .errors import LayerLabError, UnknownClass, UnknownMesh
from .formats import image_to_png_bytes, load_label_map, save_mask_png
from .labeling import (
    LabelAssignment,
    propagate_labels,
    set_manual_label,
    snap_labels,
)
from .layers import extract_layer
from .model import CharacterModel
from .psd import export_psd
from .raster import render_composite, visibility_masks
from .session import RevisionConflict, Session
from .taxonomy import UNLABELED, class_color

_RENDER_CACHE_SIZE = 64


def _parse_visible(raw: Optional[str]) -> Optional[set[int]]:
    if raw is None:
        return None
    raw = raw.strip()
    if raw == "":
        return set()
    try:
        return {int(tok) for tok in raw.split(",") if tok.strip() != ""}
    except ValueError as e:
        raise UnknownMesh(f"visible ids must be integers: {e}") from None


def _class_filter_ids(
    model: CharacterModel, assignment: LabelAssignment, raw: Optional[str]
) -> Optional[set[int]]:
    """Mesh ids matching a class filter like "Hair,Face" or "!Hair"."""
    if raw is None or raw.strip() == "":
        return None
    names = [tok.strip() for tok in raw.split(",") if tok.strip() != ""]
    exclude = all(n.startswith("!") for n in names)
    wanted = {model.taxonomy.index_of(n.lstrip("!")) for n in names}
    ids = set()
    for mesh in model.meshes:
        cls = assignment.class_of(mesh.id)
        keep = cls not in wanted if exclude else cls in wanted
        if keep:
            ids.add(mesh.id)
    return ids


def create_app(model: CharacterModel, static_dir: Optional[str] = None) -> FastAPI:
    app = FastAPI(title="layerlab annotation service")
    session = Session(model)
    masks = {m.mesh_id: m.mask for m in visibility_masks(model)}
    render_cache: OrderedDict[tuple, bytes] = OrderedDict()
    cache_lock = Lock()

    @app.exception_handler(LayerLabError)
    async def _domain_error(_request: Request, exc: LayerLabError):
        status = 404 if isinstance(exc, (UnknownMesh,)) else 400
        if isinstance(exc, RevisionConflict):
            status = 409
        return JSONResponse(status_code=status, content={"error": str(exc)})

    def _labels_payload() -> dict:
        doc = session.assignment.to_json(model.taxonomy)
        doc["revision"] = session.revision
        doc["can_undo"] = session.can_undo()
        return doc

    @app.get("/model")
    def get_model() -> dict:
        return {
            "canvas": {"width": model.canvas_width, "height": model.canvas_height},
            "taxonomy": list(model.taxonomy.classes),
            "stratify": list(model.taxonomy.stratify_default),
            "classColors": ["#%02x%02x%02x" % class_color(i) for i in range(len(model.taxonomy))],
            "meshes": [
                {
                    "id": m.id,
                    "name": m.name,
                    "path": list(m.hierarchy_path),
                    "drawOrder": m.draw_order,
                    "opacity": m.opacity,
                }
                for m in model.meshes
            ],
        }

    @app.get("/render")
    def get_render(visible: Optional[str] = None, classes: Optional[str] = None) -> Response:
        visible_ids = _parse_visible(visible)
        class_ids = _class_filter_ids(model, session.assignment, classes)
        if visible_ids is None:
            effective = class_ids
        elif class_ids is None:
            effective = visible_ids
        else:
            effective = visible_ids & class_ids
        key = (
            None if effective is None else frozenset(effective),
            session.revision if classes else None,
        )
        with cache_lock:
            cached = render_cache.get(key)
        if cached is None:
            image = render_composite(model, visible=effective)
            cached = image_to_png_bytes(image)
            with cache_lock:
                render_cache[key] = cached
                while len(render_cache) > _RENDER_CACHE_SIZE:
                    render_cache.popitem(last=False)
        return Response(content=cached, media_type="image/png")

    @app.get("/mesh/{mesh_id}/mask")
    def get_mesh_mask(mesh_id: int) -> Response:
        if mesh_id not in masks:
            raise UnknownMesh(f"no mesh with id {mesh_id}")
        buf = io.BytesIO()
        from PIL import Image as PILImage
        import numpy as np

        PILImage.fromarray(masks[mesh_id].astype(np.uint8) * 255, mode="L").save(buf, "PNG")
        return Response(content=buf.getvalue(), media_type="image/png")

    @app.get("/class/{name}/preview")
    def get_class_preview(name: str) -> Response:
        class_index = model.taxonomy.index_of(name)
        ids = [
            mid for mid in model.mesh_ids()
            if session.assignment.class_of(mid) == class_index
        ]
        image = render_composite(model, visible=ids)
        return Response(content=image_to_png_bytes(image), media_type="image/png")

    @app.get("/labels")
    def get_labels() -> dict:
        return _labels_payload()

    @app.post("/labels/{mesh_id}")
    async def post_label(mesh_id: int, request: Request) -> dict:
        body = await request.json()
        if not isinstance(body, dict) or "class" not in body:
            return JSONResponse(status_code=400, content={"error": "body must set 'class'"})
        name = body["class"]
        class_index = UNLABELED if name is None else model.taxonomy.index_of(name)
        updated = set_manual_label(session.assignment, mesh_id, class_index, model.taxonomy)
        session.mutate(updated, body.get("revision"))
        return _labels_payload()

    @app.post("/propagate")
    async def post_propagate(request: Request) -> dict:
        body = await request.json() if int(request.headers.get("content-length") or 0) else {}
        updated = propagate_labels(model, session.assignment)
        session.mutate(updated, body.get("revision") if isinstance(body, dict) else None)
        return _labels_payload()

    @app.post("/snap")
    async def post_snap(request: Request) -> dict:
        payload = await request.body()
        if not payload:
            return JSONResponse(status_code=400, content={"error": "label-map PNG body required"})
        label_map = load_label_map(payload, len(model.taxonomy))
        _, snapped = snap_labels(model, label_map, assignment=session.assignment)
        session.mutate(snapped)
        return _labels_payload()

    @app.post("/undo")
    def post_undo() -> dict:
        session.undo()
        return _labels_payload()

    @app.get("/export/assignment")
    def export_assignment() -> dict:
        return session.assignment.to_json(model.taxonomy)

    @app.get("/export/psd")
    def export_psd_endpoint() -> Response:
        labeled = model.with_labels(session.assignment.as_mesh_labels())
        present = sorted({m.label for m in labeled.meshes if m.label >= 0})
        if not present:
            return JSONResponse(status_code=400, content={"error": "no labeled meshes"})
        layers = [extract_layer(labeled, c) for c in present]
        depths = [render_depth_map(labeled, c) for c in present]
        with tempfile.TemporaryDirectory() as tmp:
            out = Path(tmp) / "export.psd"
            export_psd(layers, depths, model.taxonomy, out, model=labeled)
            blob = out.read_bytes()
        return Response(content=blob, media_type="image/vnd.adobe.photoshop")

    if static_dir:
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app


def serve(model: CharacterModel, port: int = 8000, static_dir: Optional[str] = None) -> None:
    """Run the annotation service with uvicorn (blocking)."""
    import uvicorn

    uvicorn.run(create_app(model, static_dir), host="127.0.0.1", port=port)
