"""Canonical head template: topology, landmarks, and region labelings."""

import numpy as np

from textface.template import (
    FEATURE_REGIONS,
    N_LANDMARKS,
    REGION_BACK_HEAD,
    REGION_FACE_OTHER,
    REGION_FEATURE,
    REGION_LANDMARK,
    canonical_template,
    interpupillary_distance,
)

MESH, MASKS = canonical_template()


class TestTopology:
    def test_vertex_and_face_counts(self):
        assert MESH.n_vertices == 27 * 72 + 2 == 1946
        assert MESH.n_faces == 3888

    def test_closed_surface_every_edge_in_two_faces(self):
        edges = {}
        for tri in MESH.faces:
            for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
                key = (min(a, b), max(a, b))
                edges[key] = edges.get(key, 0) + 1
        assert set(edges.values()) == {2}

    def test_no_degenerate_triangles(self):
        assert MESH.face_areas().min() > 1e-6

    def test_consistent_outward_orientation(self):
        tri = MESH.vertices[MESH.faces]
        normals = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        centroid = MESH.vertices.mean(axis=0)
        outward = tri.mean(axis=1) - centroid
        assert np.all(np.sum(normals * outward, axis=1) > 0)

    def test_uv_in_unit_square(self):
        assert MESH.uv.min() >= 0.0 and MESH.uv.max() <= 1.0


class TestLandmarks:
    def test_68_distinct_landmarks(self):
        assert len(MASKS.landmark_indices) == N_LANDMARKS
        assert len(set(MASKS.landmark_indices)) == N_LANDMARKS
        assert len(MASKS.landmark_names) == N_LANDMARKS

    def test_pupil_midpoint_is_origin(self):
        pl, pr = MASKS.pupil_indices
        mid = 0.5 * (MESH.vertices[pl] + MESH.vertices[pr])
        assert np.allclose(mid, 0.0, atol=1e-9)

    def test_interpupillary_distance_positive(self):
        assert interpupillary_distance(MESH, MASKS) > 20.0

    def test_named_lookup_matches_index(self):
        for name, idx in zip(MASKS.landmark_names, MASKS.landmark_indices):
            assert MASKS.landmark(name) == idx

    def test_landmarks_are_on_the_front(self):
        lm = MESH.vertices[np.asarray(MASKS.landmark_indices)]
        centroid_z = MESH.vertices[:, 2].mean()
        assert np.all(lm[:, 2] > centroid_z)


class TestRegions:
    def test_loss_region_labels_partition_vertices(self):
        labels = set(MASKS.region_of_vertex)
        assert labels == {
            REGION_LANDMARK,
            REGION_FEATURE,
            REGION_FACE_OTHER,
            REGION_BACK_HEAD,
        }
        assert len(MASKS.region_of_vertex) == MESH.n_vertices

    def test_landmark_vertices_labeled_landmark(self):
        idx = np.asarray(MASKS.landmark_indices)
        assert np.all(MASKS.region_of_vertex[idx] == REGION_LANDMARK)

    def test_feature_labels_cover_all_four_regions(self):
        labels = set(MASKS.feature_region_of_vertex)
        assert labels == set(FEATURE_REGIONS)

    def test_back_of_head_is_nonempty_and_behind(self):
        back = MASKS.region_of_vertex == REGION_BACK_HEAD
        assert back.sum() > 100
        # back-head vertices sit behind the frontal face plane or below it
        v = MESH.vertices[back]
        assert np.all((v[:, 2] < 5.0 + 1e-9) | (v[:, 1] < -80.0))

    def test_cached_accessor_returns_copies(self):
        a, _ = canonical_template()
        b, _ = canonical_template()
        a.vertices[0] += 1.0
        assert not np.allclose(a.vertices[0], b.vertices[0])
