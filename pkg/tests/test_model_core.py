"""Archive parsing/serialization, model invariants, dataset manifests."""

from __future__ import annotations

import io
import json
import zipfile

import numpy as np
import pytest

from layerlab.archive import (
    load_manifest,
    parse_model,
    save_manifest,
    serialize_model,
)
from layerlab.errors import (
    DuplicatePath,
    InvariantViolation,
    MalformedArchive,
    MissingModelFile,
    SchemaViolation,
    UnknownSplit,
)
from layerlab.model import (
    ArtMesh,
    CharacterModel,
    DatasetManifest,
    ManifestEntry,
    validate_manifest,
)
from layerlab.taxonomy import Taxonomy

from conftest import build_tri3, quad_mesh, random_model, solid_atlas


def minimal_model() -> CharacterModel:
    return CharacterModel(
        canvas_width=4,
        canvas_height=4,
        atlases=[solid_atlas((255, 0, 0), size=4)],
        meshes=[quad_mesh(0, 0, 0, 4, 4, draw_order=0)],
    )


def read_model_json(blob: bytes) -> dict:
    with zipfile.ZipFile(io.BytesIO(blob)) as zf:
        return json.loads(zf.read("model.json"))


class TestArchiveRoundTrip:
    def test_minimal_archive_parses(self):
        blob = serialize_model(minimal_model())
        model = parse_model(blob)
        assert len(model.meshes) == 1
        assert [m.draw_order for m in model.meshes] == [0]
        assert len(model.meshes[0].triangles) == 2

    def test_minimal_round_trip_equality(self):
        model = minimal_model()
        assert parse_model(serialize_model(model)) == model

    def test_tri3_round_trip_json_byte_identical(self, tri3):
        blob1 = serialize_model(tri3)
        reparsed = parse_model(blob1)
        blob2 = serialize_model(reparsed)
        assert read_model_json(blob1) == read_model_json(blob2)
        with zipfile.ZipFile(io.BytesIO(blob1)) as z1, zipfile.ZipFile(io.BytesIO(blob2)) as z2:
            assert z1.read("model.json") == z2.read("model.json")

    def test_tri3_double_serialize_deterministic(self, tri3):
        assert serialize_model(tri3) == serialize_model(tri3)

    def test_tri3_full_round_trip_equality(self, tri3):
        assert parse_model(serialize_model(tri3)) == tri3

    def test_default_taxonomy_serializes_19_entries(self):
        doc = read_model_json(serialize_model(minimal_model()))
        assert len(doc["taxonomy"]) == 19

    def test_random_models_round_trip(self, rng):
        for _ in range(10):
            model = random_model(rng, int(rng.integers(1, 8)), size=(16, 16), labeled=True)
            assert parse_model(serialize_model(model)) == model

    def test_labels_round_trip_by_name(self, tri3):
        model = parse_model(serialize_model(tri3))
        assert [m.label for m in model.meshes] == [0, 1, 0]

    def test_parameters_round_trip(self, tri3):
        model = parse_model(serialize_model(tri3))
        assert model.parameters == tri3.parameters


class TestArchiveErrors:
    def test_not_a_zip(self):
        with pytest.raises(MalformedArchive):
            parse_model(b"definitely not a zip")

    def test_missing_model_json(self):
        buf = io.BytesIO()
        with zipfile.ZipFile(buf, "w") as zf:
            zf.writestr("something.txt", "hi")
        with pytest.raises(MalformedArchive):
            parse_model(buf.getvalue())

    def _mutate_json(self, mutate) -> bytes:
        blob = serialize_model(minimal_model())
        with zipfile.ZipFile(io.BytesIO(blob)) as zf:
            doc = json.loads(zf.read("model.json"))
            atlas = zf.read("atlas_0.png")
        mutate(doc)
        buf = io.BytesIO()
        with zipfile.ZipFile(buf, "w") as zf:
            zf.writestr("model.json", json.dumps(doc))
            zf.writestr("atlas_0.png", atlas)
        return buf.getvalue()

    def test_missing_field_reports_json_path(self):
        blob = self._mutate_json(lambda doc: doc["meshes"][0].pop("uvs"))
        with pytest.raises(SchemaViolation) as err:
            parse_model(blob)
        assert "meshes[0]" in str(err.value)

    def test_bad_vertex_type(self):
        blob = self._mutate_json(lambda doc: doc["meshes"][0]["vertices"].__setitem__(0, ["a", 1]))
        with pytest.raises(SchemaViolation):
            parse_model(blob)

    def test_unknown_label_name(self):
        blob = self._mutate_json(lambda doc: doc["meshes"][0].__setitem__("label", "NotAClass"))
        with pytest.raises(Exception):
            parse_model(blob)

    def test_duplicate_draw_order_rejected(self):
        def dup(doc):
            clone = dict(doc["meshes"][0])
            clone["id"] = 99
            clone["drawOrder"] = doc["meshes"][0]["drawOrder"]
            doc["meshes"].append(clone)

        blob = self._mutate_json(dup)
        with pytest.raises(InvariantViolation):
            parse_model(blob)

    def test_retie_breaks_duplicates_by_mesh_id(self):
        def dup(doc):
            clone = dict(doc["meshes"][0])
            clone["id"] = 99
            doc["meshes"].append(clone)

        blob = self._mutate_json(dup)
        model = parse_model(blob, retie=True)
        orders = {m.id: m.draw_order for m in model.meshes}
        assert orders[0] < orders[99]
        assert sorted(orders.values()) == [0, 1]

    def test_triangle_index_out_of_range(self):
        with pytest.raises(InvariantViolation):
            ArtMesh(
                id=0, name="m", hierarchy_path=(),
                vertices=[[0, 0], [1, 0], [0, 1]],
                uvs=[[0, 0], [1, 0], [0, 1]],
                triangles=[[0, 1, 3]],
                texture_index=0, draw_order=0,
            )

    def test_uv_count_mismatch(self):
        with pytest.raises(InvariantViolation):
            ArtMesh(
                id=0, name="m", hierarchy_path=(),
                vertices=[[0, 0], [1, 0], [0, 1]],
                uvs=[[0, 0], [1, 0]],
                triangles=[[0, 1, 2]],
                texture_index=0, draw_order=0,
            )

    def test_texture_index_out_of_range(self):
        with pytest.raises(InvariantViolation):
            CharacterModel(
                canvas_width=4, canvas_height=4,
                atlases=[solid_atlas((0, 0, 0), size=4)],
                meshes=[quad_mesh(0, 0, 0, 4, 4, draw_order=0, texture_index=2)],
            )


class TestModelInvariants:
    def test_draw_order_total_order(self, rng):
        for _ in range(5):
            model = random_model(rng, 10, size=(8, 8))
            orders = [m.draw_order for m in model.meshes_by_order()]
            assert orders == sorted(orders)
            assert len(set(orders)) == len(orders)

    def test_hierarchy_groups_prefix_closed(self, tri3):
        groups = tri3.hierarchy_groups()
        for group in groups:
            for i in range(len(group)):
                assert group[:i] in groups

    def test_taxonomy_default_stratify_set(self):
        taxonomy = Taxonomy()
        assert set(taxonomy.stratify_default) == {"Hair", "Handwear", "Topwear", "Bottomwear"}
        assert len(taxonomy) == 19

    def test_taxonomy_rejects_duplicates(self):
        with pytest.raises(Exception):
            Taxonomy(classes=("A", "A"), stratify_default=())


class TestManifest:
    def test_three_entry_counts(self):
        manifest = DatasetManifest([
            ManifestEntry("a.lcm", "train"),
            ManifestEntry("b.lcm", "val"),
            ManifestEntry("c.lcm", "test"),
        ])
        assert validate_manifest(manifest) == (1, 1, 1)

    def test_reference_dataset_sizes_echoed(self):
        entries = (
            [ManifestEntry(f"t{i}.lcm", "train") for i in range(7404)]
            + [ManifestEntry(f"v{i}.lcm", "val") for i in range(851)]
            + [ManifestEntry(f"x{i}.lcm", "test") for i in range(847)]
        )
        assert validate_manifest(DatasetManifest(entries)) == (7404, 851, 847)

    def test_duplicate_path_rejected(self):
        manifest = DatasetManifest([
            ManifestEntry("a.lcm", "train"),
            ManifestEntry("a.lcm", "val"),
        ])
        with pytest.raises(DuplicatePath):
            validate_manifest(manifest)

    def test_unknown_split_rejected(self):
        with pytest.raises(UnknownSplit):
            validate_manifest(DatasetManifest([ManifestEntry("a.lcm", "dev")]))

    def test_missing_file_with_root(self, tmp_path):
        manifest = DatasetManifest([ManifestEntry("a.lcm", "train")])
        with pytest.raises(MissingModelFile):
            validate_manifest(manifest, root=str(tmp_path))

    def test_jsonl_round_trip(self, tmp_path):
        manifest = DatasetManifest([
            ManifestEntry("a.lcm", "train", "x0y0"),
            ManifestEntry("b.lcm", "val", "x-1y1"),
        ])
        path = tmp_path / "manifest.jsonl"
        save_manifest(manifest, path)
        assert load_manifest(path) == manifest
