"""Minimal deterministic software renderer.

Orthographic camera at a given yaw, z-buffer rasterization with ties broken
toward the lower triangle index, top-left fill convention, flat shading with
bilinear texture sampling.  Because the pixel-to-texel sampling pattern is
fixed once the geometry is fixed, the image is an exact sparse linear map of
the texture; that map is exposed for analytic texture gradients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix

from .errors import ValidationError

try:  # compiled fragment loop; numpy fallback keeps the module importable
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False

DEFAULT_IMAGE_SIZE = 128
DEFAULT_MM_PER_PIXEL = 1.6
DEFAULT_YAWS = (-30.0, 0.0, 30.0)


@dataclass(frozen=True)
class RenderView:
    """Orthographic camera: yaw about the vertical axis, pixel scale in mm."""

    yaw_deg: float = 0.0
    height: int = DEFAULT_IMAGE_SIZE
    width: int = DEFAULT_IMAGE_SIZE
    mm_per_pixel: float = DEFAULT_MM_PER_PIXEL
    background: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.height < 16 or self.width < 16:
            raise ValidationError("render size must be at least 16 x 16")
        if self.mm_per_pixel <= 0:
            raise ValidationError("mm_per_pixel must be positive")
        if len(self.background) != 3:
            raise ValidationError("background must be an RGB triple")

    def rotation(self):
        a = np.deg2rad(self.yaw_deg)
        c, s = np.cos(a), np.sin(a)
        return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])

    def project(self, points):
        """World mm -> continuous pixel coordinates (x right, y down) and depth."""
        p = np.asarray(points, dtype=np.float64) @ self.rotation().T
        sx = self.width / 2.0 + p[..., 0] / self.mm_per_pixel
        sy = self.height / 2.0 - p[..., 1] / self.mm_per_pixel
        return np.stack([sx, sy], axis=-1), p[..., 2]


def default_views():
    return tuple(RenderView(yaw_deg=y) for y in DEFAULT_YAWS)


def _edge(ax, ay, bx, by, px, py):
    return (bx - ax) * (py - ay) - (by - ay) * (px - ax)


def _raster_fragments_numpy(pts, z, uvs, area2, c0, r0, bw, counts, height, width):
    """Vectorized fragment generation + z-buffer (fallback path)."""
    total = int(counts.sum())
    t_idx = np.repeat(np.arange(len(counts)), counts)
    offsets = np.concatenate([[0], np.cumsum(counts)[:-1]])
    local = np.arange(total) - offsets[t_idx]
    col = c0[t_idx] + local % bw[t_idx]
    row = r0[t_idx] + local // bw[t_idx]
    px = col + 0.5
    py = row + 0.5

    ax, ay = pts[t_idx, 0, 0], pts[t_idx, 0, 1]
    bx, by = pts[t_idx, 1, 0], pts[t_idx, 1, 1]
    cx, cy = pts[t_idx, 2, 0], pts[t_idx, 2, 1]
    w0 = _edge(bx, by, cx, cy, px, py)
    w1 = _edge(cx, cy, ax, ay, px, py)
    w2 = _edge(ax, ay, bx, by, px, py)

    # top-left fill: a zero edge value counts as inside only for top edges
    # (horizontal, interior below) and left edges (pointing up the screen)
    def _edge_ok(wv, x0, y0, x1, y1):
        dx, dy = x1 - x0, y1 - y0
        top_left = (dy < 0.0) | ((dy == 0.0) & (dx > 0.0))
        return (wv > 0.0) | ((wv == 0.0) & top_left)

    inside = (
        _edge_ok(w0, bx, by, cx, cy)
        & _edge_ok(w1, cx, cy, ax, ay)
        & _edge_ok(w2, ax, ay, bx, by)
    )
    if not inside.any():
        return np.empty(0, dtype=np.int64), np.empty((0, 2))
    t_idx, row, col = t_idx[inside], row[inside], col[inside]
    w0, w1, w2 = w0[inside], w1[inside], w2[inside]
    a2 = area2[t_idx]
    b0, b1, b2 = w0 / a2, w1 / a2, w2 / a2
    frag_z = b0 * z[t_idx, 0] + b1 * z[t_idx, 1] + b2 * z[t_idx, 2]
    pid = row * width + col

    # z-buffer: keep the nearest fragment per pixel, lower triangle on ties
    order = np.lexsort((t_idx, -frag_z, pid))
    pid_sorted = pid[order]
    first = np.concatenate([[True], pid_sorted[1:] != pid_sorted[:-1]])
    win = order[first]
    uv = (
        b0[win, None] * uvs[t_idx[win], 0]
        + b1[win, None] * uvs[t_idx[win], 1]
        + b2[win, None] * uvs[t_idx[win], 2]
    )
    return pid[win], uv


if _HAVE_NUMBA:

    @njit(cache=True)
    def _raster_kernel(pts, z, uvs, area2, c0, r0, c1, r1, height, width):
        depth = np.full(height * width, -np.inf)
        uu = np.zeros(height * width)
        vv = np.zeros(height * width)
        covered = np.zeros(height * width, np.bool_)
        for t in range(pts.shape[0]):
            ax, ay = pts[t, 0, 0], pts[t, 0, 1]
            bx, by = pts[t, 1, 0], pts[t, 1, 1]
            cx, cy = pts[t, 2, 0], pts[t, 2, 1]
            a2 = area2[t]
            # top-left flags per edge (horizontal going right, or going up)
            tl0 = (cy - by) < 0.0 or ((cy - by) == 0.0 and (cx - bx) > 0.0)
            tl1 = (ay - cy) < 0.0 or ((ay - cy) == 0.0 and (ax - cx) > 0.0)
            tl2 = (by - ay) < 0.0 or ((by - ay) == 0.0 and (bx - ax) > 0.0)
            for rr in range(r0[t], r1[t] + 1):
                py = rr + 0.5
                for cc in range(c0[t], c1[t] + 1):
                    px = cc + 0.5
                    w0 = (cx - bx) * (py - by) - (cy - by) * (px - bx)
                    if w0 < 0.0 or (w0 == 0.0 and not tl0):
                        continue
                    w1 = (ax - cx) * (py - cy) - (ay - cy) * (px - cx)
                    if w1 < 0.0 or (w1 == 0.0 and not tl1):
                        continue
                    w2 = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
                    if w2 < 0.0 or (w2 == 0.0 and not tl2):
                        continue
                    b0 = w0 / a2
                    b1 = w1 / a2
                    b2 = w2 / a2
                    fz = b0 * z[t, 0] + b1 * z[t, 1] + b2 * z[t, 2]
                    p = rr * width + cc
                    # strict > with ascending t ties toward the lower index
                    if fz > depth[p]:
                        depth[p] = fz
                        uu[p] = b0 * uvs[t, 0, 0] + b1 * uvs[t, 1, 0] + b2 * uvs[t, 2, 0]
                        vv[p] = b0 * uvs[t, 0, 1] + b1 * uvs[t, 1, 1] + b2 * uvs[t, 2, 1]
                        covered[p] = True
        return covered, uu, vv


def _rasterize(mesh, view: RenderView, cull_backfaces=False):
    """Visible-fragment sampling.

    Returns (pixel_ids, uv) for every covered pixel: the winning triangle's
    interpolated texture coordinate at that pixel center.  With
    ``cull_backfaces`` the away-facing half of a closed outward-oriented mesh
    is dropped up front (identical image, about half the work).
    """
    if mesh.uv is None:
        raise ValidationError("mesh has no uv coordinates")
    screen, depth = view.project(mesh.vertices)
    tri = mesh.faces
    pts = screen[tri]            # (M, 3, 2)
    z = depth[tri]               # (M, 3)
    uvs = mesh.uv[tri]           # (M, 3, 2)

    # orient every triangle to positive signed area (screen space, y down);
    # outward-oriented front faces project with negative area here
    area2 = _edge(pts[:, 0, 0], pts[:, 0, 1], pts[:, 1, 0], pts[:, 1, 1],
                  pts[:, 2, 0], pts[:, 2, 1])
    if cull_backfaces:
        keep0 = area2 < 0.0
        pts, z, uvs, area2 = pts[keep0], z[keep0], uvs[keep0], area2[keep0]
    flip = area2 < 0.0
    pts[flip] = pts[flip][:, [0, 2, 1]]
    z[flip] = z[flip][:, [0, 2, 1]]
    uvs[flip] = uvs[flip][:, [0, 2, 1]]
    area2 = np.abs(area2)
    keep = area2 > 1e-12
    if not keep.any():
        return np.empty(0, dtype=np.int64), np.empty((0, 2))
    pts, z, uvs, area2 = pts[keep], z[keep], uvs[keep], area2[keep]

    # candidate pixels: integer bbox of each triangle, clipped to the image
    h, w = view.height, view.width
    c0 = np.clip(np.ceil(pts[..., 0].min(axis=1) - 0.5), 0, w - 1).astype(np.int64)
    c1 = np.clip(np.floor(pts[..., 0].max(axis=1) - 0.5), 0, w - 1).astype(np.int64)
    r0 = np.clip(np.ceil(pts[..., 1].min(axis=1) - 0.5), 0, h - 1).astype(np.int64)
    r1 = np.clip(np.floor(pts[..., 1].max(axis=1) - 0.5), 0, h - 1).astype(np.int64)
    bw = np.maximum(c1 - c0 + 1, 0)
    bh = np.maximum(r1 - r0 + 1, 0)
    counts = bw * bh
    nonempty = counts > 0
    if not nonempty.any():
        return np.empty(0, dtype=np.int64), np.empty((0, 2))
    pts, z, uvs, area2 = pts[nonempty], z[nonempty], uvs[nonempty], area2[nonempty]
    c0, r0, c1, r1 = c0[nonempty], r0[nonempty], c1[nonempty], r1[nonempty]
    bw, counts = bw[nonempty], counts[nonempty]

    if _HAVE_NUMBA:
        covered, uu, vv = _raster_kernel(
            np.ascontiguousarray(pts), np.ascontiguousarray(z),
            np.ascontiguousarray(uvs), area2, c0, r0, c1, r1, h, w,
        )
        pid = np.flatnonzero(covered)
        return pid, np.stack([uu[pid], vv[pid]], axis=1)
    return _raster_fragments_numpy(pts, z, uvs, area2, c0, r0, bw, counts, h, w)


def _bilinear_taps(uv, tex_h, tex_w):
    """4 texel indices and weights per sample; image row 0 carries v = 1."""
    tx = uv[:, 0] * tex_w - 0.5
    ty = (1.0 - uv[:, 1]) * tex_h - 0.5
    x0 = np.clip(np.floor(tx), 0, tex_w - 1).astype(np.int64)
    y0 = np.clip(np.floor(ty), 0, tex_h - 1).astype(np.int64)
    x1 = np.minimum(x0 + 1, tex_w - 1)
    y1 = np.minimum(y0 + 1, tex_h - 1)
    fx = np.clip(tx - x0, 0.0, 1.0)
    fy = np.clip(ty - y0, 0.0, 1.0)
    idx = np.stack([y0 * tex_w + x0, y0 * tex_w + x1,
                    y1 * tex_w + x0, y1 * tex_w + x1], axis=1)
    wts = np.stack([(1 - fx) * (1 - fy), fx * (1 - fy),
                    (1 - fx) * fy, fx * fy], axis=1)
    return idx, wts


def render_with_map(mesh, texture, view: RenderView, cull_backfaces=False):
    """Render and return (image, texture->image sparse map, covered mask).

    ``map`` is (H*W, tex_h*tex_w): for each channel,
    image.reshape(-1, 3)[:, c] = map @ texture.reshape(-1, 3)[:, c] on covered
    pixels and the background elsewhere.
    """
    texture = np.asarray(texture, dtype=np.float64)
    if texture.ndim != 3 or texture.shape[2] != 3:
        raise ValidationError("texture must be an H x W x 3 image")
    pid, uv = _rasterize(mesh, view, cull_backfaces)
    h, w = view.height, view.width
    tex_h, tex_w = texture.shape[:2]
    covered = np.zeros(h * w, dtype=bool)
    image = np.empty((h * w, 3))
    image[:] = np.asarray(view.background, dtype=np.float64)
    if len(pid):
        covered[pid] = True
        idx, wts = _bilinear_taps(uv, tex_h, tex_w)
        tex_flat = texture.reshape(-1, 3)
        image[pid] = np.einsum("kt,ktc->kc", wts, tex_flat[idx])
        rows = np.repeat(pid, 4)
        smap = coo_matrix(
            (wts.reshape(-1), (rows, idx.reshape(-1))),
            shape=(h * w, tex_h * tex_w),
        ).tocsr()
    else:
        smap = coo_matrix((h * w, tex_h * tex_w)).tocsr()
    return image.reshape(h, w, 3), smap, covered.reshape(h, w)


def render(mesh, texture, view: RenderView, cull_backfaces=False):
    """Render the textured mesh; empty projection yields the background."""
    image, _, _ = render_with_map(mesh, texture, view, cull_backfaces)
    return image


def to_gray(image):
    """Luma weights matching the corpus luminance measurements."""
    return image @ np.array([0.299, 0.587, 0.114])


def downsample(image, size):
    """Block-mean downsample to size x size (image dims must divide evenly)."""
    h, w = image.shape[:2]
    if h % size or w % size:
        raise ValidationError("image size must be divisible by the target size")
    bh, bw = h // size, w // size
    return image.reshape(size, bh, size, bw, *image.shape[2:]).mean(axis=(1, 3))
