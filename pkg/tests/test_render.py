"""Software renderer: projection, rasterization rules, and the texture map."""

import numpy as np
import pytest

from textface.errors import ValidationError
from textface.meshio import FaceMesh
from textface.render import (
    RenderView,
    default_views,
    downsample,
    render,
    render_with_map,
    to_gray,
)
from textface.template import canonical_template


def _template_with_texture(color=None):
    mesh, _ = canonical_template()
    tex = np.zeros((32, 32, 3))
    tex[:] = (0.2, 0.5, 0.8) if color is None else color
    return mesh, tex


def _flat_square(half=16.0):
    """Axis-aligned square at z=0 split along the diagonal."""
    verts = np.array([
        [-half, -half, 0.0], [half, -half, 0.0],
        [half, half, 0.0], [-half, half, 0.0],
    ])
    faces = np.array([[0, 1, 2], [0, 2, 3]])
    uv = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    return FaceMesh(verts, faces, uv)


class TestRenderView:
    def test_too_small_image_rejected(self):
        with pytest.raises(ValidationError):
            RenderView(0.0, height=8, width=8)

    def test_bad_scale_rejected(self):
        with pytest.raises(ValidationError):
            RenderView(0.0, mm_per_pixel=0.0)

    def test_bad_background_rejected(self):
        with pytest.raises(ValidationError):
            RenderView(0.0, background=(1.0, 1.0))

    def test_default_views_are_three_yaws(self):
        views = default_views()
        assert [v.yaw_deg for v in views] == [-30.0, 0.0, 30.0]

    def test_projection_axes(self):
        view = RenderView(0.0)
        screen, depth = view.project(np.array([[16.0, 16.0, 5.0]]))
        # +x goes right, +y goes up the world = down-negative in screen rows
        assert screen[0, 0] == pytest.approx(64.0 + 10.0)
        assert screen[0, 1] == pytest.approx(64.0 - 10.0)
        assert depth[0] == pytest.approx(5.0)


class TestRasterization:
    def test_constant_texture_gives_constant_foreground(self):
        mesh, tex = _template_with_texture((0.3, 0.6, 0.9))
        image, _, covered = render_with_map(mesh, tex, RenderView(0.0))
        assert covered.any()
        assert np.allclose(image[covered], (0.3, 0.6, 0.9), atol=1e-12)
        assert np.allclose(image[~covered], 0.0)

    def test_nose_tip_projects_to_center_column(self):
        mesh, tex = _template_with_texture()
        view = RenderView(0.0)
        nose = mesh.vertices[np.argmax(mesh.vertices[:, 2])]
        screen, _ = view.project(nose[None])
        assert abs(screen[0, 0] - view.width / 2.0) < 2.0

    def test_shared_edge_covers_each_pixel_exactly_once(self):
        # 32mm square at 1.6mm/px = a 20x20 pixel block, seams included
        mesh = _flat_square(16.0)
        _, _, covered = render_with_map(mesh, np.ones((4, 4, 3)), RenderView(0.0))
        assert covered.sum() == 400

    def test_nearer_surface_wins_depth_test(self):
        near = _flat_square(8.0)
        far = FaceMesh(near.vertices - [0.0, 0.0, 10.0], near.faces, near.uv)
        both = FaceMesh(
            np.vstack([far.vertices, near.vertices]),
            np.vstack([far.faces, near.faces + 4]),
            np.vstack([np.zeros((4, 2)), np.ones((4, 2))]),
        )
        tex = np.zeros((8, 8, 3))
        tex[7, 0] = 1.0  # the texel the far square's uv (0,0) samples
        image = render(both, tex, RenderView(0.0))
        # the near square (uv all ones) samples a zero texel, so the center
        # pixel is bright only if the depth test wrongly kept the far square
        assert np.allclose(image[64, 64], 0.0)

    def test_cull_backfaces_image_identical(self):
        mesh, tex = _template_with_texture()
        for view in default_views():
            a = render(mesh, tex, view, cull_backfaces=False)
            b = render(mesh, tex, view, cull_backfaces=True)
            assert np.array_equal(a, b)

    def test_render_is_deterministic(self):
        mesh, tex = _template_with_texture()
        a = render(mesh, tex, RenderView(17.0))
        b = render(mesh, tex, RenderView(17.0))
        assert np.array_equal(a, b)

    def test_offscreen_mesh_yields_background(self):
        mesh, tex = _template_with_texture()
        moved = mesh.with_vertices(mesh.vertices + [1e5, 0.0, 0.0])
        view = RenderView(0.0, background=(0.1, 0.2, 0.3))
        image, smap, covered = render_with_map(moved, tex, view)
        assert not covered.any()
        assert smap.nnz == 0
        assert np.allclose(image, (0.1, 0.2, 0.3))

    def test_mesh_without_uv_rejected(self):
        mesh, tex = _template_with_texture()
        bare = FaceMesh(mesh.vertices, mesh.faces)
        with pytest.raises(ValidationError):
            render(bare, tex, RenderView(0.0))

    def test_bad_texture_rejected(self):
        mesh, _ = _template_with_texture()
        with pytest.raises(ValidationError):
            render(mesh, np.zeros((8, 8)), RenderView(0.0))


class TestTextureMap:
    def test_image_is_exactly_linear_in_texture(self):
        mesh, _ = canonical_template()
        rng = np.random.default_rng(0)
        tex = rng.uniform(0, 1, (32, 32, 3))
        view = RenderView(20.0)
        image, smap, covered = render_with_map(mesh, tex, view)
        flat_img = image.reshape(-1, 3)
        flat_tex = tex.reshape(-1, 3)
        for c in range(3):
            mapped = smap @ flat_tex[:, c]
            assert np.allclose(flat_img[covered.reshape(-1), c],
                               mapped[covered.reshape(-1)], atol=1e-12)

    def test_map_rows_sum_to_one_on_covered_pixels(self):
        mesh, tex = _template_with_texture()
        _, smap, covered = render_with_map(mesh, tex, RenderView(0.0))
        sums = np.asarray(smap.sum(axis=1)).reshape(-1)
        assert np.allclose(sums[covered.reshape(-1)], 1.0, atol=1e-12)

    def test_texture_gradient_matches_finite_differences(self):
        mesh, _ = canonical_template()
        rng = np.random.default_rng(1)
        tex = rng.uniform(0.2, 0.8, (16, 16, 3))
        view = RenderView(0.0)
        weights = rng.normal(size=(view.height * view.width,))

        def objective(texture):
            img = render(mesh, texture, view)
            return float(weights @ to_gray(img).reshape(-1))

        _, smap, _ = render_with_map(mesh, tex, view)
        luma = np.array([0.299, 0.587, 0.114])
        analytic = (smap.T @ weights)[:, None] * luma  # (texels, 3)
        eps = 1e-6
        for _ in range(10):
            i, j, c = rng.integers(0, 16), rng.integers(0, 16), rng.integers(0, 3)
            probe = tex.copy()
            probe[i, j, c] += eps
            fp = objective(probe)
            probe[i, j, c] -= 2 * eps
            fm = objective(probe)
            fd = (fp - fm) / (2 * eps)
            assert abs(fd - analytic[i * 16 + j, c]) < 1e-6 * max(1.0, abs(fd))


class TestImageOps:
    def test_to_gray_uses_luma_weights(self):
        img = np.zeros((2, 2, 3))
        img[0, 0] = (1.0, 0.0, 0.0)
        img[0, 1] = (0.0, 1.0, 0.0)
        gray = to_gray(img)
        assert gray[0, 0] == pytest.approx(0.299)
        assert gray[0, 1] == pytest.approx(0.587)

    def test_downsample_block_mean(self):
        img = np.arange(16, dtype=float).reshape(4, 4)
        out = downsample(img, 2)
        assert out[0, 0] == pytest.approx(np.mean([0, 1, 4, 5]))
        assert out[1, 1] == pytest.approx(np.mean([10, 11, 14, 15]))

    def test_downsample_requires_divisibility(self):
        with pytest.raises(ValidationError):
            downsample(np.zeros((10, 10)), 3)
