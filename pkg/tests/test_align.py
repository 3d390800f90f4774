"""Rigid and non-rigid registration."""

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from textface.align import (
    SimilarityTransform,
    icp,
    interpupillary_scale,
    nicp,
    procrustes,
)
from textface.errors import ValidationError
from textface.metrics import chamfer
from textface.template import canonical_template, gaussian_bump


def _random_transform(seed, max_angle_deg=40.0, max_shift=20.0, scale=(0.8, 1.3)):
    rng = np.random.default_rng(seed)
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = np.radians(rng.uniform(-max_angle_deg, max_angle_deg))
    rot = Rotation.from_rotvec(angle * axis).as_matrix()
    return SimilarityTransform(
        float(rng.uniform(*scale)), rot, rng.uniform(-max_shift, max_shift, 3)
    )


class TestSimilarityTransform:
    def test_compose_matches_sequential_application(self):
        a = _random_transform(0)
        b = _random_transform(1)
        pts = np.random.default_rng(2).normal(size=(10, 3))
        assert np.allclose((a.compose(b)).apply(pts), a.apply(b.apply(pts)), atol=1e-12)

    def test_reflection_rejected(self):
        with pytest.raises(ValidationError):
            SimilarityTransform(1.0, np.diag([1.0, 1.0, -1.0]), np.zeros(3))

    def test_nonpositive_scale_rejected(self):
        with pytest.raises(ValidationError):
            SimilarityTransform(0.0, np.eye(3), np.zeros(3))


class TestProcrustes:
    @pytest.mark.parametrize("seed", range(5))
    def test_recovers_known_transform_exactly(self, seed):
        rng = np.random.default_rng(seed)
        src = rng.normal(size=(30, 3)) * 10.0
        truth = _random_transform(seed + 100)
        est = procrustes(src, truth.apply(src))
        assert abs(est.scale - truth.scale) < 1e-9
        assert np.allclose(est.rotation, truth.rotation, atol=1e-9)
        assert np.allclose(est.translation, truth.translation, atol=1e-9)
        assert np.allclose(est.apply(src), truth.apply(src), atol=1e-9)

    def test_collinear_points_rejected(self):
        src = np.outer(np.arange(5, dtype=float), [1.0, 0.0, 0.0])
        with pytest.raises(ValidationError):
            procrustes(src, src + 1.0)

    def test_too_few_points_rejected(self):
        with pytest.raises(ValidationError):
            procrustes(np.zeros((2, 3)), np.zeros((2, 3)))


class TestIcp:
    def test_small_rigid_perturbation_recovered(self):
        mesh, _ = canonical_template()
        rot = Rotation.from_euler("y", 10.0, degrees=True).as_matrix()
        moved = mesh.with_vertices(mesh.vertices @ rot.T + [5.0, 0.0, 0.0])
        result = icp(moved, mesh)
        aligned = moved.with_vertices(result.transform.apply(moved.vertices))
        assert chamfer(aligned.vertices, mesh.vertices) < 1e-4
        assert result.rms < 1e-6
        assert result.converged

    def test_point_cloud_without_correspondences_improves_fit(self):
        mesh, _ = canonical_template()
        rot = Rotation.from_euler("x", 4.0, degrees=True).as_matrix()
        cloud = mesh.vertices @ rot.T + [0.0, 2.0, 0.0]
        result = icp(cloud, mesh.vertices)
        moved = result.transform.apply(cloud)
        assert chamfer(moved, mesh.vertices) < chamfer(cloud, mesh.vertices)
        assert result.rms_history[-1] <= result.rms_history[0]

    def test_empty_input_rejected(self):
        with pytest.raises(ValidationError):
            icp(np.zeros((0, 3)), np.zeros((10, 3)))

    def test_rms_history_recorded(self):
        mesh, _ = canonical_template()
        result = icp(mesh, mesh)
        assert result.rms_history and result.rms_history[-1] <= result.rms_history[0]


class TestNicp:
    def test_recovers_smooth_deformation(self):
        mesh, _ = canonical_template()
        center = mesh.vertices[np.argmax(mesh.vertices[:, 2])]
        bump = gaussian_bump(mesh.vertices, center, 20.0)
        deformed = mesh.vertices + 8.0 * bump[:, None] * [0.0, 0.0, 1.0]
        registered = nicp(mesh, deformed)
        assert chamfer(registered.vertices, deformed) < 1.0

    def test_identity_scan_stays_put(self):
        mesh, _ = canonical_template()
        registered = nicp(mesh, mesh.vertices)
        assert np.abs(registered.vertices - mesh.vertices).max() < 1e-6

    def test_tiny_scan_rejected(self):
        mesh, _ = canonical_template()
        with pytest.raises(ValidationError):
            nicp(mesh, np.zeros((10, 3)))


class TestInterpupillaryScale:
    def test_scaled_mesh_matches_reference_distance(self, masks):
        mesh, _ = canonical_template()
        grown = mesh.with_vertices(mesh.vertices * 1.37)
        rescaled = interpupillary_scale(grown, mesh, masks)
        assert np.allclose(rescaled.vertices, mesh.vertices, atol=1e-9)

    def test_degenerate_mesh_rejected(self, masks):
        mesh, _ = canonical_template()
        flat = mesh.with_vertices(np.zeros_like(mesh.vertices))
        with pytest.raises(ValidationError):
            interpupillary_scale(flat, mesh, masks)
