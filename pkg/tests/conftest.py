"""Shared fixtures: deterministic model builders and random generators."""

from __future__ import annotations

import numpy as np
import pytest

from layerlab.model import ArtMesh, CharacterModel, DeformParameter, TextureAtlas
from layerlab.taxonomy import Taxonomy


def solid_atlas(color, size=8, alpha=255) -> TextureAtlas:
    """Uniform-color square atlas; color is an RGB byte triple."""
    pixels = np.zeros((size, size, 4), dtype=np.uint8)
    pixels[:, :, :3] = color
    pixels[:, :, 3] = alpha
    return TextureAtlas(width=size, height=size, pixels=pixels)


def quad_mesh(
    mesh_id: int,
    x0: float,
    y0: float,
    x1: float,
    y1: float,
    draw_order: int,
    name: str = "",
    path=(),
    texture_index: int = 0,
    opacity: float = 1.0,
    label: int = -1,
    uv_rect=(0.25, 0.25, 0.75, 0.75),
) -> ArtMesh:
    """Axis-aligned rectangle as two triangles, UV-mapped to uv_rect."""
    u0, v0, u1, v1 = uv_rect
    return ArtMesh(
        id=mesh_id,
        name=name or f"mesh{mesh_id}",
        hierarchy_path=tuple(path),
        vertices=[[x0, y0], [x1, y0], [x1, y1], [x0, y1]],
        uvs=[[u0, v0], [u1, v0], [u1, v1], [u0, v1]],
        triangles=[[0, 1, 2], [0, 2, 3]],
        texture_index=texture_index,
        draw_order=draw_order,
        opacity=opacity,
        label=label,
    )


def tri_mesh(
    mesh_id: int,
    pts,
    draw_order: int,
    name: str = "",
    path=(),
    texture_index: int = 0,
    opacity: float = 1.0,
    label: int = -1,
    uvs=((0.3, 0.3), (0.7, 0.3), (0.5, 0.7)),
) -> ArtMesh:
    return ArtMesh(
        id=mesh_id,
        name=name or f"mesh{mesh_id}",
        hierarchy_path=tuple(path),
        vertices=list(pts),
        uvs=list(uvs),
        triangles=[[0, 1, 2]],
        texture_index=texture_index,
        draw_order=draw_order,
        opacity=opacity,
        label=label,
    )


def build_tri3(with_parameters: bool = True) -> CharacterModel:
    """The 3-mesh reference fixture: opaque overlapping fragments.

    Mesh 10 (Hair, z=0) underneath, mesh 11 (Face, z=5) overlapping it,
    mesh 12 (Hair, z=9) on top of both. Canvas 24×24.
    """
    atlases = [solid_atlas((200, 40, 40)), solid_atlas((40, 200, 40)), solid_atlas((40, 40, 200))]
    meshes = [
        tri_mesh(10, [[1, 23], [23, 23], [1, 3]], 0, name="PartHairBack",
                 path=("Body", "Hair"), texture_index=0, label=0),
        quad_mesh(11, 6, 6, 18, 18, 5, name="FaceBase",
                  path=("Body", "Face"), texture_index=1, label=1),
        tri_mesh(12, [[4, 16], [20, 16], [12, 2]], 9, name="PartHairFront",
                 path=("Body", "Hair"), texture_index=2, label=0),
    ]
    parameters = []
    if with_parameters:
        parameters = [
            DeformParameter(
                name="AngleX",
                offsets_neg={10: np.full((3, 2), [-2.0, 0.0]), 11: np.full((4, 2), [-1.0, 0.0])},
                offsets_pos={10: np.full((3, 2), [2.0, 0.0]), 11: np.full((4, 2), [1.5, 0.0])},
            ),
            DeformParameter(
                name="AngleY",
                offsets_neg={11: np.full((4, 2), [0.0, -1.0]), 12: np.full((3, 2), [0.0, -2.0])},
                offsets_pos={11: np.full((4, 2), [0.0, 1.0]), 12: np.full((3, 2), [0.0, 2.5])},
            ),
        ]
    return CharacterModel(
        canvas_width=24,
        canvas_height=24,
        atlases=atlases,
        meshes=meshes,
        parameters=parameters,
        metadata={"fixture": "tri3"},
    )


def random_model(
    rng: np.random.Generator,
    n_meshes: int,
    size=(64, 64),
    binary_alpha: bool = True,
    labeled: bool = False,
    opacity_one: bool = True,
) -> CharacterModel:
    """Random triangles over a random atlas with unique draw orders."""
    width, height = size
    atlas_px = rng.integers(0, 256, size=(8, 8, 4)).astype(np.uint8)
    if binary_alpha:
        atlas_px[:, :, 3] = 255
    else:
        atlas_px[:, :, 3] = rng.integers(64, 256, size=(8, 8))
    atlas = TextureAtlas(width=8, height=8, pixels=atlas_px)

    orders = rng.permutation(n_meshes * 3)[:n_meshes]
    groups = [(), ("G0",), ("G0", "G1"), ("G2",)]
    meshes = []
    for i in range(n_meshes):
        pts = rng.uniform([-4, -4], [width + 4, height + 4], size=(3, 2))
        meshes.append(
            ArtMesh(
                id=100 + i,
                name=f"Part{i}",
                hierarchy_path=groups[int(rng.integers(0, len(groups)))],
                vertices=pts,
                uvs=rng.uniform(0.05, 0.95, size=(3, 2)),
                triangles=[[0, 1, 2]],
                texture_index=0,
                draw_order=int(orders[i]),
                opacity=1.0 if opacity_one else float(rng.uniform(0.3, 1.0)),
                label=int(rng.integers(0, 19)) if labeled else -1,
            )
        )
    return CharacterModel(
        canvas_width=width,
        canvas_height=height,
        atlases=[atlas],
        meshes=meshes,
    )


@pytest.fixture
def tri3() -> CharacterModel:
    return build_tri3()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240811)
