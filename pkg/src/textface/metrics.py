"""Evaluation protocol: Chamfer Distance, Complete Rate, identity similarity.

``evaluate`` mirrors the full protocol: scale the prediction to the ground
truth's interpupillary distance, rigidly align with ICP, then measure.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import pdist

from .align import icp, interpupillary_scale
from .errors import ValidationError
from .meshio import FaceMesh
from .render import RenderView, downsample, render, to_gray
from .template import REGION_BACK_HEAD, canonical_template


def _points_of(mesh_or_points):
    pts = mesh_or_points.vertices if isinstance(mesh_or_points, FaceMesh) else (
        np.asarray(mesh_or_points, dtype=np.float64))
    if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) == 0:
        raise ValidationError("expected a non-empty N x 3 point set")
    return pts


def chamfer(mesh_a, mesh_b):
    """Symmetric two-term vertex Chamfer distance in mm.

    Sum of the two directed mean nearest-neighbor distances; two single
    points at distance d therefore give 2d.
    """
    a = _points_of(mesh_a)
    b = _points_of(mesh_b)
    d_ab, _ = cKDTree(b).query(a, k=1)
    d_ba, _ = cKDTree(a).query(b, k=1)
    return float(d_ab.mean() + d_ba.mean())


def complete_rate(mesh_a, mesh_b, threshold=10.0):
    """Fraction of mesh_a vertices within ``threshold`` mm of mesh_b."""
    if threshold < 0:
        raise ValidationError("threshold must be non-negative")
    a = _points_of(mesh_a)
    b = _points_of(mesh_b)
    d, _ = cKDTree(b).query(a, k=1)
    return float((d < threshold).mean())


class IdentityEmbedder:
    """Geometric + photometric identity feature.

    Concatenates the l2-normalized vector of all pairwise landmark distances
    with an l2-normalized 8 x 8 grayscale downsample of a fixed-camera render.
    """

    def __init__(self, masks=None, view=None, gray_size=8):
        self.masks = masks if masks is not None else canonical_template()[1]
        self.view = view if view is not None else RenderView(0.0)
        self.gray_size = gray_size

    def embed(self, mesh, texture=None):
        if texture is None:
            texture = mesh.texture
        if texture is None:
            texture = np.full((16, 16, 3), 0.5)
        lm = mesh.vertices[np.asarray(self.masks.landmark_indices)]
        geo = pdist(lm)
        geo_norm = np.linalg.norm(geo)
        if geo_norm == 0:
            raise ValidationError("degenerate landmarks: zero pairwise distances")
        image = render(mesh, texture, self.view, cull_backfaces=True)
        gray = downsample(to_gray(image), self.gray_size).reshape(-1)
        gray_norm = np.linalg.norm(gray)
        photo = gray / gray_norm if gray_norm > 0 else gray
        return np.concatenate([geo / geo_norm, photo])


def cosine(u, v):
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise ValidationError("cosine of a zero vector")
    return float(np.dot(u, v) / (nu * nv))


def identity_similarity(embedder, a, b):
    """Cosine similarity of identity features; a and b are FaceMesh (with
    texture) or (mesh, texture) pairs, rendered with identical cameras."""
    def _embed(x):
        if isinstance(x, tuple):
            return embedder.embed(x[0], x[1])
        return embedder.embed(x)
    return cosine(_embed(a), _embed(b))


@dataclass
class EvalConfig:
    threshold: float = 10.0
    front_only: bool = False
    masks: object = None
    embedder: IdentityEmbedder = None
    icp_max_iters: int = 50


@dataclass
class EvalResult:
    cd: float
    cr: float
    id_sim: float
    transform: object

    def as_dict(self):
        return {"cd": self.cd, "cr": self.cr, "id_sim": self.id_sim}


def evaluate(pred: FaceMesh, gt: FaceMesh, cfg: EvalConfig = None):
    """Scale to matching interpupillary distance, ICP-align, then measure."""
    cfg = cfg or EvalConfig()
    masks = cfg.masks if cfg.masks is not None else canonical_template()[1]
    embedder = cfg.embedder if cfg.embedder is not None else IdentityEmbedder(masks)

    scaled = interpupillary_scale(pred, gt, masks)
    result = icp(scaled, gt, max_iters=cfg.icp_max_iters)
    aligned = scaled.with_vertices(result.transform.apply(scaled.vertices))

    if cfg.front_only:
        front = masks.region_of_vertex != REGION_BACK_HEAD
        a, b = aligned.vertices[front], gt.vertices[front]
    else:
        a, b = aligned, gt
    cd = chamfer(a, b)
    cr = complete_rate(a, b, cfg.threshold)
    id_sim = identity_similarity(
        embedder, (aligned, pred.texture), (gt, gt.texture)
    )
    return EvalResult(cd=cd, cr=cr, id_sim=id_sim, transform=result.transform)
