"""OBJ mesh and PNG texture round trips, plus the array archive format."""

import numpy as np
import pytest

from textface.archive import load_archive, save_archive
from textface.errors import ArchiveError, MeshParseError, ValidationError
from textface.meshio import FaceMesh, load_mesh, load_texture, save_mesh, save_texture
from textface.template import canonical_template


def _toy_mesh():
    verts = np.array([[0.0, 0.0, 0.0], [1.25, 0.0, 0.0], [0.0, 2.5, -0.75]])
    faces = np.array([[0, 1, 2]])
    uv = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, 1.0]])
    return FaceMesh(verts, faces, uv)


class TestFaceMesh:
    def test_face_index_bounds_validated(self):
        with pytest.raises(ValidationError):
            FaceMesh(np.zeros((3, 3)), np.array([[0, 1, 3]]), np.zeros((3, 2)))

    def test_uv_count_must_match_vertices(self):
        with pytest.raises(ValidationError):
            FaceMesh(np.zeros((3, 3)), np.array([[0, 1, 2]]), np.zeros((2, 2)))

    def test_with_vertices_keeps_topology(self):
        mesh = _toy_mesh()
        moved = mesh.with_vertices(mesh.vertices + 1.0)
        assert np.array_equal(moved.faces, mesh.faces)
        assert np.allclose(moved.vertices, mesh.vertices + 1.0)


class TestObjRoundTrip:
    def test_round_trip_exact_at_written_precision(self, tmp_path):
        mesh = _toy_mesh()
        path = tmp_path / "m.obj"
        save_mesh(mesh, path)
        loaded = load_mesh(path)
        assert np.allclose(loaded.vertices, mesh.vertices, atol=1e-6)
        assert np.array_equal(loaded.faces, mesh.faces)
        assert np.allclose(loaded.uv, mesh.uv, atol=1e-6)

    def test_canonical_template_round_trip(self, tmp_path):
        mesh, _ = canonical_template()
        path = tmp_path / "head.obj"
        save_mesh(mesh, path)
        loaded = load_mesh(path)
        assert loaded.n_vertices == mesh.n_vertices
        assert np.array_equal(loaded.faces, mesh.faces)
        assert np.allclose(loaded.vertices, mesh.vertices, atol=1e-6)

    def test_save_is_byte_deterministic(self, tmp_path):
        mesh = _toy_mesh()
        save_mesh(mesh, tmp_path / "a.obj")
        save_mesh(mesh, tmp_path / "b.obj")
        assert (tmp_path / "a.obj").read_bytes() == (tmp_path / "b.obj").read_bytes()

    def test_parse_error_reports_line(self, tmp_path):
        path = tmp_path / "bad.obj"
        path.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 zzz\n")
        with pytest.raises(MeshParseError) as exc:
            load_mesh(path)
        assert exc.value.line == 4

    def test_empty_file_rejected(self, tmp_path):
        path = tmp_path / "empty.obj"
        path.write_text("")
        with pytest.raises(MeshParseError):
            load_mesh(path)


class TestTexture:
    def test_png_round_trip_8bit_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        img = np.round(rng.uniform(0, 1, (8, 8, 3)) * 255) / 255.0
        path = tmp_path / "t.png"
        save_texture(img, path)
        loaded = load_texture(path)
        assert np.allclose(loaded, img, atol=1e-12)


class TestArchive:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(1)
        arrays = {"a": rng.normal(size=(3, 4)), "b": rng.normal(size=7)}
        save_archive(tmp_path / "arch", arrays, meta={"kind": "test", "n": 3})
        loaded, meta = load_archive(tmp_path / "arch")
        assert meta["kind"] == "test" and meta["n"] == 3
        for k in arrays:
            assert np.array_equal(loaded[k], arrays[k])

    def test_corrupt_manifest_rejected(self, tmp_path):
        save_archive(tmp_path / "arch", {"a": np.zeros(2)}, meta={})
        (tmp_path / "arch" / "manifest.json").write_text("{not json")
        with pytest.raises(ArchiveError):
            load_archive(tmp_path / "arch")

    def test_size_mismatch_rejected(self, tmp_path):
        import json

        save_archive(tmp_path / "arch", {"a": np.zeros(4)}, meta={})
        manifest = tmp_path / "arch" / "manifest.json"
        data = json.loads(manifest.read_text())
        data["arrays"]["a"]["shape"] = [5]
        manifest.write_text(json.dumps(data))
        with pytest.raises(ArchiveError):
            load_archive(tmp_path / "arch")
