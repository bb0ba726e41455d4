"""CPU rasterization, z-ordered compositing, visibility, pose deformation.

Conventions:
  - Pixel centers sit at (x + 0.5, y + 0.5) in canvas coordinates, y down.
  - Coverage is binary per triangle: a center is inside when every edge
    function is positive, with the top-left rule deciding exact-boundary
    centers (top edge: dy == 0 and dx > 0; left edge: dy < 0, for the
    winding normalized to a positive doubled area).
  - UV (0,0) is the atlas top-left; texel centers at ((i+0.5)/W, (j+0.5)/H).
  - Color rendering samples the atlas bilinearly, mask generation samples
    nearest; both multiply the mesh opacity into alpha.

All functions are pure with respect to the model.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, replace
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .errors import MissingParameter, OutOfRange, UnknownParameter
from .model import ArtMesh, CharacterModel

DEFAULT_TAU_VIS = 0.5

GRID_VALUES = (-1.0, 0.0, 1.0)


@dataclass(eq=False)
class RGBAImage:
    """Straight-alpha image, float64 channels in [0,1]."""

    pixels: np.ndarray  # H×W×4

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float64)
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 4:
            raise ValueError("RGBAImage expects an H×W×4 array")

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def rgb(self) -> np.ndarray:
        return self.pixels[:, :, :3]

    @property
    def alpha(self) -> np.ndarray:
        return self.pixels[:, :, 3]

    @classmethod
    def blank(cls, width: int, height: int) -> "RGBAImage":
        return cls(np.zeros((height, width, 4)))

    @classmethod
    def from_parts(cls, rgb: np.ndarray, alpha: np.ndarray) -> "RGBAImage":
        return cls(np.concatenate([rgb, alpha[:, :, None]], axis=2))


@dataclass(eq=False)
class AlphaMap:
    """A mesh's own sampled alpha before occlusion; zero outside its footprint."""

    mesh_id: int
    alpha: np.ndarray  # H×W in [0,1]


@dataclass(eq=False)
class VisibilityMask:
    mesh_id: int
    mask: np.ndarray  # H×W bool


def over(front: RGBAImage, back: RGBAImage) -> RGBAImage:
    """Straight-alpha 'over' operator (front composited onto back)."""
    fa = front.alpha
    ba = back.alpha
    out_a = fa + ba * (1.0 - fa)
    num = front.rgb * fa[:, :, None] + back.rgb * (ba * (1.0 - fa))[:, :, None]
    with np.errstate(invalid="ignore", divide="ignore"):
        out_rgb = np.where(out_a[:, :, None] > 0.0, num / np.where(out_a == 0.0, 1.0, out_a)[:, :, None], 0.0)
    return RGBAImage.from_parts(out_rgb, out_a)


def _coverage(
    width: int, height: int, vertices: np.ndarray, triangles: np.ndarray, mesh_id: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Rasterize triangles; return (covered mask, bary weights w0,w1,w2 H×W×3
    for the winding order used, triangle index map, vertex index triple map).

    Later triangles of the same mesh overwrite earlier ones where they
    overlap, which keeps the fill deterministic.
    """
    covered = np.zeros((height, width), dtype=bool)
    bary = np.zeros((height, width, 3), dtype=np.float64)
    tri_vertex = np.zeros((height, width, 3), dtype=np.int64)

    for tri in triangles:
        i0, i1, i2 = (int(v) for v in tri)
        v0, v1, v2 = vertices[i0], vertices[i1], vertices[i2]
        # Doubled signed area; normalize winding so the interior is positive.
        area2 = (v1[0] - v0[0]) * (v2[1] - v0[1]) - (v1[1] - v0[1]) * (v2[0] - v0[0])
        if area2 == 0.0:
            warnings.warn(f"mesh {mesh_id}: degenerate triangle {tri.tolist()} skipped")
            continue
        if area2 < 0.0:
            i1, i2 = i2, i1
            v1, v2 = v2, v1
            area2 = -area2

        xs = np.array([v0[0], v1[0], v2[0]])
        ys = np.array([v0[1], v1[1], v2[1]])
        x_lo = max(int(np.floor(xs.min() - 0.5)), 0)
        x_hi = min(int(np.ceil(xs.max() - 0.5)) + 1, width)
        y_lo = max(int(np.floor(ys.min() - 0.5)), 0)
        y_hi = min(int(np.ceil(ys.max() - 0.5)) + 1, height)
        if x_lo >= x_hi or y_lo >= y_hi:
            continue

        px = np.arange(x_lo, x_hi, dtype=np.float64) + 0.5
        py = np.arange(y_lo, y_hi, dtype=np.float64) + 0.5
        gx, gy = np.meshgrid(px, py)

        inside = np.ones(gx.shape, dtype=bool)
        edge_vals = []
        for (ax, ay), (bx, by) in (((v0[0], v0[1]), (v1[0], v1[1])),
                                   ((v1[0], v1[1]), (v2[0], v2[1])),
                                   ((v2[0], v2[1]), (v0[0], v0[1]))):
            e = (bx - ax) * (gy - ay) - (by - ay) * (gx - ax)
            dx, dy = bx - ax, by - ay
            top_left = (dy == 0.0 and dx > 0.0) or dy < 0.0
            inside &= (e > 0.0) | ((e == 0.0) & top_left)
            edge_vals.append(e)
        if not inside.any():
            continue

        # Barycentric weight of a vertex = opposite edge function / area.
        w0 = edge_vals[1] / area2
        w1 = edge_vals[2] / area2
        w2 = edge_vals[0] / area2

        sub = (slice(y_lo, y_hi), slice(x_lo, x_hi))
        covered_sub = covered[sub]
        covered_sub |= inside
        covered[sub] = covered_sub
        for k, w in enumerate((w0, w1, w2)):
            plane = bary[sub + (k,)]
            plane[inside] = w[inside]
            bary[sub + (k,)] = plane
        for k, vi in enumerate((i0, i1, i2)):
            plane = tri_vertex[sub + (k,)]
            plane[inside] = vi
            tri_vertex[sub + (k,)] = plane

    return covered, bary, tri_vertex


def _sample_atlas(
    atlas_pixels: np.ndarray, u: np.ndarray, v: np.ndarray, sampling: str
) -> np.ndarray:
    """Sample RGBA (float [0,1]) at normalized uv coordinates."""
    h, w = atlas_pixels.shape[:2]
    tex = atlas_pixels.astype(np.float64) / 255.0
    if sampling == "nearest":
        ix = np.clip(np.floor(u * w).astype(np.int64), 0, w - 1)
        iy = np.clip(np.floor(v * h).astype(np.int64), 0, h - 1)
        return tex[iy, ix]
    if sampling != "bilinear":
        raise ValueError(f"unknown sampling mode {sampling!r}")
    fx = u * w - 0.5
    fy = v * h - 0.5
    x0 = np.floor(fx).astype(np.int64)
    y0 = np.floor(fy).astype(np.int64)
    tx = fx - x0
    ty = fy - y0
    x0c = np.clip(x0, 0, w - 1)
    x1c = np.clip(x0 + 1, 0, w - 1)
    y0c = np.clip(y0, 0, h - 1)
    y1c = np.clip(y0 + 1, 0, h - 1)
    c00 = tex[y0c, x0c]
    c10 = tex[y0c, x1c]
    c01 = tex[y1c, x0c]
    c11 = tex[y1c, x1c]
    tx = tx[..., None]
    ty = ty[..., None]
    blend = (c00 * (1 - tx) + c10 * tx) * (1 - ty) + (c01 * (1 - tx) + c11 * tx) * ty
    # Interpolating four equal texels is exactly that texel; forcing it keeps
    # opaque/solid regions bit-exact instead of off by an ulp.
    uniform = (c00 == c10) & (c00 == c01) & (c00 == c11)
    return np.where(uniform, c00, blend)


def rasterize_mesh(
    model: CharacterModel, mesh_id: int, sampling: str = "bilinear"
) -> tuple[AlphaMap, np.ndarray]:
    """Rasterize one mesh; returns its AlphaMap and per-pixel RGB (H×W×3).

    Alpha is the atlas alpha sampled at the interpolated UV, multiplied by
    the mesh opacity; both arrays are zero outside the rasterized footprint.
    """
    mesh = model.mesh(mesh_id)
    width, height = model.canvas_size
    alpha = np.zeros((height, width), dtype=np.float64)
    rgb = np.zeros((height, width, 3), dtype=np.float64)
    covered, bary, tri_vertex = _coverage(width, height, mesh.vertices, mesh.triangles, mesh.id)
    if covered.any():
        uv = (
            bary[covered][:, :, None] * mesh.uvs[tri_vertex[covered]]
        ).sum(axis=1)
        texel = _sample_atlas(model.atlases[mesh.texture_index].pixels, uv[:, 0], uv[:, 1], sampling)
        rgb[covered] = texel[:, :3]
        alpha[covered] = texel[:, 3] * mesh.opacity
    return AlphaMap(mesh_id=mesh.id, alpha=alpha), rgb


def _ordered_visible(model: CharacterModel, visible: Optional[Iterable[int]]) -> list[ArtMesh]:
    meshes = model.meshes_by_order()
    if visible is None:
        return meshes
    wanted = set(visible)
    unknown = wanted - set(model.mesh_ids())
    if unknown:
        from .errors import UnknownMesh

        raise UnknownMesh(f"visible set references unknown mesh ids {sorted(unknown)}")
    return [m for m in meshes if m.id in wanted]


def render_composite(
    model: CharacterModel,
    visible: Optional[Iterable[int]] = None,
    sampling: str = "bilinear",
) -> RGBAImage:
    """Composite meshes back-to-front (ascending draw order) with 'over'.

    Restricting `visible` implements the annotation GUI's see-through
    toggles. Accumulates premultiplied color, which is associative, and
    converts back to straight alpha at the end.
    """
    width, height = model.canvas_size
    acc_rgb = np.zeros((height, width, 3), dtype=np.float64)
    acc_a = np.zeros((height, width), dtype=np.float64)
    for mesh in _ordered_visible(model, visible):
        amap, rgb = rasterize_mesh(model, mesh.id, sampling=sampling)
        a = amap.alpha[:, :, None]
        acc_rgb = rgb * a + acc_rgb * (1.0 - a)
        acc_a = amap.alpha + acc_a * (1.0 - amap.alpha)
    with np.errstate(invalid="ignore", divide="ignore"):
        straight = np.where(acc_a[:, :, None] > 0.0,
                            acc_rgb / np.where(acc_a == 0.0, 1.0, acc_a)[:, :, None],
                            0.0)
    return RGBAImage.from_parts(straight, acc_a)


def mesh_alphas(
    model: CharacterModel, sampling: str = "nearest"
) -> dict[int, np.ndarray]:
    """Per-mesh sampled alpha maps keyed by mesh id."""
    return {m.id: rasterize_mesh(model, m.id, sampling=sampling)[0].alpha for m in model.meshes}


def visibility_masks(
    model: CharacterModel,
    tau_vis: float = DEFAULT_TAU_VIS,
    alphas: Optional[Mapping[int, np.ndarray]] = None,
) -> list[VisibilityMask]:
    """Per-mesh binary masks of surviving contribution after occlusion.

    A pixel belongs to mesh m's mask when alpha_m * prod over later-drawn
    k of (1 - alpha_k) >= tau_vis. Masks are returned in model mesh order.
    Precomputed alphas (nearest-sampled) may be passed to avoid
    re-rasterizing.
    """
    if not 0.0 < tau_vis < 1.0:
        raise ValueError("tau_vis must lie strictly between 0 and 1")
    if alphas is None:
        alphas = mesh_alphas(model, sampling="nearest")
    width, height = model.canvas_size
    transmittance = np.ones((height, width), dtype=np.float64)
    masks: dict[int, np.ndarray] = {}
    for mesh in sorted(model.meshes, key=lambda m: -m.draw_order):
        a = alphas[mesh.id]
        masks[mesh.id] = a * transmittance >= tau_vis
        transmittance = transmittance * (1.0 - a)
    return [VisibilityMask(mesh_id=m.id, mask=masks[m.id]) for m in model.meshes]


def apply_pose(model: CharacterModel, values: Mapping[str, float]) -> CharacterModel:
    """Displace vertices by linearly interpolated keyframe offsets.

    Labels, draw orders and UVs are untouched; parameters at exactly 0
    contribute nothing, so the all-zero pose is bit-identical to the input.
    """
    known = {p.name for p in model.parameters}
    for name, value in values.items():
        if name not in known:
            raise UnknownParameter(f"model has no parameter {name!r}")
        if not -1.0 <= value <= 1.0:
            raise OutOfRange(f"parameter {name}={value} outside [-1, 1]")

    displacement: dict[int, np.ndarray] = {}
    for p in model.parameters:
        value = values.get(p.name, 0.0)
        if value == 0.0:
            continue
        bank = p.offsets_pos if value > 0.0 else p.offsets_neg
        scale = abs(value)
        for mesh_id, offsets in bank.items():
            delta = scale * offsets
            if mesh_id in displacement:
                displacement[mesh_id] = displacement[mesh_id] + delta
            else:
                displacement[mesh_id] = delta

    if not displacement:
        meshes = list(model.meshes)
    else:
        meshes = [
            replace(m, vertices=m.vertices + displacement[m.id])
            if m.id in displacement
            else m
            for m in model.meshes
        ]
    return CharacterModel(
        canvas_width=model.canvas_width,
        canvas_height=model.canvas_height,
        atlases=model.atlases,
        meshes=meshes,
        parameters=model.parameters,
        taxonomy=model.taxonomy,
        metadata=model.metadata,
    )


def pose_id(ax: float, ay: float) -> str:
    def fmt(v: float) -> str:
        return str(int(v)) if float(v).is_integer() else f"{v:g}"

    return f"x{fmt(ax)}y{fmt(ay)}"


def generate_orientation_grid(
    model: CharacterModel,
) -> list[tuple[str, CharacterModel]]:
    """The 3×3 pose grid over AngleX/AngleY in {-1, 0, +1}.

    Returns (pose id, posed model) pairs; the center pose is the input
    model unchanged. Mesh labels and draw orders are invariant across the
    grid.
    """
    for required in ("AngleX", "AngleY"):
        if model.parameter(required) is None:
            raise MissingParameter(f"orientation grid requires parameter {required!r}")
    grid = []
    for ay, ax in itertools.product(GRID_VALUES, GRID_VALUES):
        posed = apply_pose(model, {"AngleX": ax, "AngleY": ay})
        grid.append((pose_id(ax, ay), posed))
    return grid
