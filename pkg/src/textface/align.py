"""Rigid and non-rigid registration: Procrustes, ICP, and a simplified NICP.

NICP here solves for per-vertex translations under a graph-Laplacian
stiffness term with a decreasing stiffness schedule, rather than per-vertex
affine frames; adequate for registering synthetic scans onto the template.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import identity as sparse_identity
from scipy.sparse import coo_matrix
from scipy.sparse.linalg import cg
from scipy.spatial import cKDTree

from .errors import NumericalError, ValidationError
from .meshio import FaceMesh
from .template import interpupillary_distance


@dataclass(frozen=True)
class SimilarityTransform:
    """x -> scale * R @ x + translation."""

    scale: float
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64)
        if r.shape != (3, 3):
            raise ValidationError("rotation must be 3x3")
        if self.scale <= 0:
            raise ValidationError("scale must be positive")
        if not np.allclose(r @ r.T, np.eye(3), atol=1e-6) or np.linalg.det(r) < 0:
            raise ValidationError("rotation must be orthonormal with det +1")

    @classmethod
    def identity(cls):
        return cls(1.0, np.eye(3), np.zeros(3))

    def apply(self, points):
        return self.scale * (np.asarray(points) @ self.rotation.T) + self.translation

    def compose(self, inner):
        """self after inner: (self o inner)(x)."""
        return SimilarityTransform(
            self.scale * inner.scale,
            self.rotation @ inner.rotation,
            self.scale * (inner.translation @ self.rotation.T) + self.translation,
        )


def procrustes(src_points, dst_points):
    """Least-squares similarity transform mapping src onto dst (closed form).

    Cross-covariance SVD with reflection excluded by sign correction.
    """
    src = np.asarray(src_points, dtype=np.float64)
    dst = np.asarray(dst_points, dtype=np.float64)
    if src.shape != dst.shape or src.ndim != 2 or src.shape[1] != 3:
        raise ValidationError("src/dst must be equal-shaped N x 3 arrays")
    n = len(src)
    if n < 3:
        raise ValidationError("need at least 3 correspondences")
    mu_s, mu_d = src.mean(axis=0), dst.mean(axis=0)
    cs, cd = src - mu_s, dst - mu_d
    cov = cd.T @ cs / n
    u, d, vt = np.linalg.svd(cov)
    if d[1] < 1e-12 * max(d[0], 1.0):
        raise ValidationError("degenerate (collinear) point configuration")
    sign = np.ones(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        sign[2] = -1.0
    rotation = u @ np.diag(sign) @ vt
    var_s = (cs ** 2).sum() / n
    scale = float((d * sign).sum() / var_s)
    if scale <= 0:
        raise ValidationError("degenerate configuration: non-positive scale")
    translation = mu_d - scale * (mu_s @ rotation.T)
    return SimilarityTransform(scale, rotation, translation)


@dataclass
class IcpResult:
    transform: SimilarityTransform
    rms: float
    converged: bool
    rms_history: list = field(default_factory=list)


def _points_of(mesh_or_points):
    if isinstance(mesh_or_points, FaceMesh):
        return mesh_or_points.vertices
    return np.asarray(mesh_or_points, dtype=np.float64)


def icp(src, dst, max_iters=50, tol=1e-6):
    """Iterative closest point with similarity Procrustes steps.

    Non-convergence returns the best transform so far with converged=False.
    """
    src_pts = _points_of(src)
    dst_pts = _points_of(dst)
    if len(src_pts) == 0 or len(dst_pts) == 0:
        raise ValidationError("icp inputs must be non-empty")
    tree = cKDTree(dst_pts)

    # same-topology meshes carry exact correspondences: use them to
    # initialize; otherwise start from centroid alignment
    if (
        isinstance(src, FaceMesh)
        and isinstance(dst, FaceMesh)
        and src.n_vertices == dst.n_vertices
        and np.array_equal(src.faces, dst.faces)
    ):
        transform = procrustes(src_pts, dst_pts)
    else:
        transform = SimilarityTransform(
            1.0, np.eye(3), dst_pts.mean(axis=0) - src_pts.mean(axis=0)
        )
    best = None
    prev_rms = np.inf
    history = []
    converged = False
    for _ in range(max_iters):
        moved = transform.apply(src_pts)
        dists, idx = tree.query(moved, k=1)
        transform = procrustes(src_pts, dst_pts[idx])
        moved = transform.apply(src_pts)
        rms = float(np.sqrt(np.mean(np.sum((moved - dst_pts[idx]) ** 2, axis=1))))
        history.append(rms)
        if best is None or rms <= best.rms:
            best = IcpResult(transform, rms, False, history)
        if prev_rms < np.inf and abs(prev_rms - rms) < tol * max(prev_rms, 1e-12):
            converged = True
            break
        if rms == 0.0:
            converged = True
            break
        prev_rms = rms
    best.converged = converged
    best.rms_history = history
    return best


def _edge_laplacian(faces, n):
    edges = set()
    for a, b, c in faces:
        edges.add((min(a, b), max(a, b)))
        edges.add((min(b, c), max(b, c)))
        edges.add((min(a, c), max(a, c)))
    edges = sorted(edges)
    rows, cols, vals = [], [], []
    for i, j in edges:
        rows += [i, j, i, j]
        cols += [j, i, i, j]
        vals += [-1.0, -1.0, 1.0, 1.0]
    return coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()


def nicp(template: FaceMesh, scan_points, stiffness_schedule=(100.0, 30.0, 10.0, 3.0, 1.0),
         iters_per_level=10, cg_tol=1e-10):
    """Non-rigid registration of the template onto a scan point set.

    Minimizes squared distance to nearest scan points plus a stiffness term
    penalizing displacement differences across template edges, coarse to fine.
    """
    scan = np.asarray(scan_points, dtype=np.float64)
    if len(scan) < 100:
        raise ValidationError("nicp needs at least 100 scan points")
    v = template.vertices
    n = len(v)
    lap = _edge_laplacian(template.faces, n)
    tree = cKDTree(scan)
    disp = np.zeros_like(v)
    for stiffness in stiffness_schedule:
        system = sparse_identity(n, format="csr") + stiffness * lap
        for _ in range(iters_per_level):
            _, idx = tree.query(v + disp, k=1)
            target = scan[idx]
            rhs = target - v
            new_disp = np.empty_like(disp)
            for c in range(3):
                sol, info = cg(system, rhs[:, c], x0=disp[:, c],
                               rtol=cg_tol, maxiter=10 * n)
                if info != 0:
                    raise NumericalError(
                        f"nicp conjugate gradient failed (info={info}) at stiffness {stiffness}"
                    )
                new_disp[:, c] = sol
            if np.max(np.abs(new_disp - disp)) < 1e-9:
                disp = new_disp
                break
            disp = new_disp
    return template.with_vertices(v + disp)


def nicp_energy(template, deformed_vertices, scan_points, stiffness):
    """Data + stiffness energy of a displacement field (diagnostic)."""
    scan = np.asarray(scan_points, dtype=np.float64)
    tree = cKDTree(scan)
    d, _ = tree.query(deformed_vertices, k=1)
    disp = deformed_vertices - template.vertices
    lap = _edge_laplacian(template.faces, len(disp))
    stiff = sum(float(disp[:, c] @ (lap @ disp[:, c])) for c in range(3))
    return float((d ** 2).sum()) + stiffness * stiff


def interpupillary_scale(mesh: FaceMesh, reference: FaceMesh, masks):
    """Uniformly scale ``mesh`` about the origin to match the reference's
    pupil-to-pupil distance."""
    d_mesh = interpupillary_distance(mesh, masks)
    d_ref = interpupillary_distance(reference, masks)
    if d_mesh <= 0:
        raise ValidationError("mesh has zero interpupillary distance")
    return mesh.with_vertices(mesh.vertices * (d_ref / d_mesh))
