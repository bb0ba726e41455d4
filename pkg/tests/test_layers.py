"""Semantic layer extraction, padded fills, depth-ordered reconstruction."""

from __future__ import annotations

import numpy as np
import pytest

from layerlab.depth import PseudoDepthMap, render_depth_map
from layerlab.errors import DimensionMismatch, UnknownClass
from layerlab.layers import SemanticLayer, extract_all_layers, extract_layer, pad_gaussian, reconstruct
from layerlab.model import CharacterModel
from layerlab.raster import render_composite

from conftest import build_tri3, quad_mesh, random_model, solid_atlas


class TestExtractLayer:
    def test_fully_hidden_mesh_appears_in_its_layer(self):
        model = CharacterModel(
            canvas_width=8, canvas_height=8,
            atlases=[solid_atlas((255, 0, 0)), solid_atlas((0, 0, 255))],
            meshes=[
                quad_mesh(0, 0, 0, 8, 8, draw_order=0, label=0, uv_rect=(0, 0, 1, 1)),
                quad_mesh(1, 0, 0, 8, 8, draw_order=1, label=1, texture_index=1,
                          uv_rect=(0, 0, 1, 1)),
            ],
        )
        hidden = extract_layer(model, 0)
        assert np.all(hidden.alpha == 1.0)
        assert np.all(hidden.rgb == np.array([1.0, 0.0, 0.0]))

    def test_empty_class_is_transparent(self, tri3):
        layer = extract_layer(tri3, 5)
        assert not layer.alpha.any()
        assert np.all(layer.padded_rgb == 0.5)

    def test_unknown_class(self, tri3):
        with pytest.raises(UnknownClass):
            extract_layer(tri3, 99)

    def test_tri3_hair_matches_restricted_painter_oracle(self, tri3):
        from oracles import composite_bruteforce

        layer = extract_layer(tri3, 0)
        hair_ids = {m.id for m in tri3.meshes if m.label == 0}
        expected = composite_bruteforce(tri3, visible=hair_ids)
        assert np.array_equal(layer.rgba, expected)

    def test_extract_all_layers_present_classes(self, tri3):
        layers = extract_all_layers(tri3)
        assert [layer.class_index for layer in layers] == [0, 1]


class TestPadGaussian:
    def test_fully_opaque_is_bit_exact_copy(self, rng):
        rgb = rng.uniform(0, 1, size=(8, 8, 3))
        padded = pad_gaussian(rgb, np.ones((8, 8)))
        assert np.array_equal(padded, rgb)

    def test_single_red_pixel_fills_everywhere(self):
        rgb = np.zeros((9, 9, 3))
        alpha = np.zeros((9, 9))
        rgb[4, 4] = [1.0, 0.0, 0.0]
        alpha[4, 4] = 1.0
        padded = pad_gaussian(rgb, alpha)
        assert np.all(padded == np.array([1.0, 0.0, 0.0]))

    def test_two_color_fill_stays_in_convex_hull(self):
        rgb = np.zeros((16, 16, 3))
        alpha = np.zeros((16, 16))
        rgb[2:6, 2:6] = [0.8, 0.1, 0.3]
        rgb[10:14, 10:14] = [0.2, 0.7, 0.5]
        alpha[2:6, 2:6] = 1.0
        alpha[10:14, 10:14] = 1.0
        padded = pad_gaussian(rgb, alpha)
        for c, (lo, hi) in enumerate([(0.2, 0.8), (0.1, 0.7), (0.3, 0.5)]):
            assert padded[:, :, c].min() >= lo - 1e-9
            assert padded[:, :, c].max() <= hi + 1e-9

    def test_known_pixels_unchanged_and_range_preserved(self, rng):
        rgb = rng.uniform(0, 1, size=(12, 12, 3))
        alpha = (rng.uniform(size=(12, 12)) < 0.3).astype(float)
        if not alpha.any():
            alpha[0, 0] = 1.0
        padded = pad_gaussian(rgb, alpha)
        known = alpha > 0
        assert np.array_equal(padded[known], rgb[known])
        assert padded.min() >= 0.0 and padded.max() <= 1.0

    def test_all_transparent_flags_and_fills_gray(self):
        with pytest.warns(UserWarning, match="transparent"):
            padded = pad_gaussian(np.zeros((4, 4, 3)), np.zeros((4, 4)))
        assert np.all(padded == 0.5)

    def test_fractional_alpha_weights_respected(self):
        rgb = np.zeros((8, 8, 3))
        alpha = np.zeros((8, 8))
        rgb[1, 1] = [1.0, 1.0, 1.0]
        alpha[1, 1] = 0.1
        padded = pad_gaussian(rgb, alpha)
        assert np.allclose(padded, 1.0)


def constant_depth_map(support: np.ndarray, value: float) -> PseudoDepthMap:
    depth = np.where(support, value, -1.0)
    return PseudoDepthMap(depth=depth, valid=support.copy())


class TestReconstruct:
    def test_single_layer_identity(self, tri3):
        layer = extract_layer(tri3, 0)
        dmap = render_depth_map(tri3, class_index=0)
        image = reconstruct([layer], [dmap])
        assert np.array_equal(image.pixels, layer.rgba)

    def test_binary_fixture_equals_full_composite(self, tri3):
        layers = extract_all_layers(tri3)
        depths = [render_depth_map(tri3, layer.class_index) for layer in layers]
        image = reconstruct(layers, depths)
        expected = render_composite(tri3)
        assert np.array_equal(image.pixels, expected.pixels)

    def test_random_binary_fixtures_equal_composite(self, rng):
        for _ in range(10):
            model = random_model(rng, int(rng.integers(2, 8)), size=(24, 24),
                                 binary_alpha=True, labeled=True)
            layers = extract_all_layers(model)
            depths = [render_depth_map(model, layer.class_index) for layer in layers]
            image = reconstruct(layers, depths)
            expected = render_composite(model)
            assert np.array_equal(image.pixels, expected.pixels)

    def test_swapping_disjoint_layer_depths_is_invariant(self):
        model = CharacterModel(
            canvas_width=12, canvas_height=12,
            atlases=[solid_atlas((255, 0, 0)), solid_atlas((0, 0, 255))],
            meshes=[
                quad_mesh(0, 0, 0, 5, 5, draw_order=0, label=0, uv_rect=(0, 0, 1, 1)),
                quad_mesh(1, 7, 7, 12, 12, draw_order=1, label=1, texture_index=1,
                          uv_rect=(0, 0, 1, 1)),
            ],
        )
        layers = extract_all_layers(model)
        support = [layer.alpha > 0 for layer in layers]
        original = reconstruct(
            layers,
            [constant_depth_map(support[0], 0.2), constant_depth_map(support[1], 0.8)],
        )
        swapped = reconstruct(
            layers,
            [constant_depth_map(support[0], 0.8), constant_depth_map(support[1], 0.2)],
        )
        assert np.array_equal(original.pixels, swapped.pixels)

    def test_dimension_mismatch(self, tri3):
        layer = extract_layer(tri3, 0)
        with pytest.raises(DimensionMismatch):
            reconstruct([layer], [])
        with pytest.raises(DimensionMismatch):
            small = PseudoDepthMap(depth=np.zeros((4, 4)), valid=np.ones((4, 4), dtype=bool))
            reconstruct([layer], [small])

    def test_fractional_alpha_close_to_composite(self, rng):
        model = random_model(rng, 6, size=(24, 24), binary_alpha=False,
                             labeled=True, opacity_one=False)
        layers = extract_all_layers(model)
        depths = [render_depth_map(model, layer.class_index) for layer in layers]
        image = reconstruct(layers, depths)
        expected = render_composite(model)
        from layerlab.metrics import metric_psnr_ssim

        psnr, _ = metric_psnr_ssim(image, expected)
        assert psnr >= 50.0
