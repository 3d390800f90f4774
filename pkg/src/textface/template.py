"""Canonical head template: a carved ellipsoid with landmarks and region masks.

The default template is a closed lat-long ellipsoid (27 rings x 72 columns
plus two poles: 1,946 vertices, 3,888 triangles) with smooth bumps carved in
for the nose, eye sockets, brow ridge, lips, and chin.  All faces generated by
the corpus module share this topology.  The mesh is translated so the midpoint
between the two pupil landmarks sits at the origin; +z faces the viewer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .meshio import FaceMesh

# region label vocabularies
REGION_LANDMARK = "landmark"
REGION_FEATURE = "feature"
REGION_FACE_OTHER = "face_other"
REGION_BACK_HEAD = "back_head"

FEAT_EYES = "eyes"
FEAT_NOSE = "nose"
FEAT_MOUTH = "mouth"
FEAT_OTHER = "other"

FEATURE_REGIONS = (FEAT_EYES, FEAT_NOSE, FEAT_MOUTH, FEAT_OTHER)

# ellipsoid semi-axes (mm) and vertical center offset in the pre-shift frame
SEMI_AXES = (72.0, 92.0, 84.0)
CENTER_Y = -26.0

N_LANDMARKS = 68


@dataclass(frozen=True)
class RegionMasks:
    """Vertex labelings used by the losses, metrics, and texture painter."""

    landmark_indices: tuple            # 68 distinct vertex indices
    landmark_names: tuple              # parallel to landmark_indices
    region_of_vertex: np.ndarray       # N labels over the loss regions
    feature_region_of_vertex: np.ndarray  # N labels over eyes/nose/mouth/other

    def landmark(self, name):
        return self.landmark_indices[self.landmark_names.index(name)]

    @property
    def pupil_indices(self):
        return self.landmark("pupil_l"), self.landmark("pupil_r")


def frontal_point(x, y):
    """Project an (x, y) point onto the front of the template ellipsoid."""
    a, b, c = SEMI_AXES
    t = 1.0 - (x / a) ** 2 - ((y - CENTER_Y) / b) ** 2
    return np.array([x, y, c * math.sqrt(max(t, 0.0))])


def feature_anchors():
    """Anchor points (on the uncarved ellipsoid) for carving and deformation."""
    return {
        "eye_l": frontal_point(-31.0, 0.0),
        "eye_r": frontal_point(31.0, 0.0),
        "brow_l": frontal_point(-29.0, 15.0),
        "brow_r": frontal_point(29.0, 15.0),
        "nose_tip": frontal_point(0.0, -20.0),
        "nose_base": frontal_point(0.0, -28.0),
        "mouth": frontal_point(0.0, -42.0),
        "mouth_l": frontal_point(-22.0, -42.0),
        "mouth_r": frontal_point(22.0, -42.0),
        "chin": frontal_point(0.0, -72.0),
        "forehead": frontal_point(0.0, 42.0),
        "cheek_l": frontal_point(-48.0, -22.0),
        "cheek_r": frontal_point(48.0, -22.0),
        "jaw_l": frontal_point(-50.0, -48.0),
        "jaw_r": frontal_point(50.0, -48.0),
    }


def gaussian_bump(points, center, sigma):
    """exp(-|p - c|^2 / (2 sigma^2)) per point; the carving/deformation kernel."""
    d2 = np.sum((points - center) ** 2, axis=1)
    return np.exp(-0.5 * d2 / (sigma * sigma))


def _ellipsoid_grid(n_rings, n_lon):
    a, b, c = SEMI_AXES
    verts = [np.array([0.0, CENTER_Y + b, 0.0])]
    uv = [(0.5, 1.0)]
    for i in range(1, n_rings + 1):
        theta = math.pi * i / (n_rings + 1)
        for j in range(n_lon):
            phi = 2.0 * math.pi * j / n_lon
            x = a * math.sin(theta) * math.sin(phi)
            y = CENTER_Y + b * math.cos(theta)
            z = c * math.sin(theta) * math.cos(phi)
            verts.append(np.array([x, y, z]))
            uv.append((((phi + math.pi) / (2.0 * math.pi)) % 1.0, 1.0 - theta / math.pi))
    verts.append(np.array([0.0, CENTER_Y - b, 0.0]))
    uv.append((0.5, 0.0))

    faces = []
    def ring(i, j):  # vertex index of ring i (1-based), column j (wrapped)
        return 1 + (i - 1) * n_lon + (j % n_lon)

    top, bottom = 0, len(verts) - 1
    for j in range(n_lon):
        faces.append((top, ring(1, j), ring(1, j + 1)))
    for i in range(1, n_rings):
        for j in range(n_lon):
            faces.append((ring(i, j), ring(i + 1, j), ring(i + 1, j + 1)))
            faces.append((ring(i, j), ring(i + 1, j + 1), ring(i, j + 1)))
    for j in range(n_lon):
        faces.append((bottom, ring(n_rings, j + 1), ring(n_rings, j)))
    return np.array(verts), np.array(faces, dtype=np.int64), np.array(uv)


def _carve(vertices):
    """Static facial relief: nose, eye sockets, brow ridge, lips, chin."""
    anchors = feature_anchors()
    center = np.array([0.0, CENTER_Y, 0.0])
    radial = vertices - center
    radial /= np.linalg.norm(radial, axis=1, keepdims=True)

    bumps = [
        (anchors["nose_tip"], 13.0, 9.0),
        (anchors["nose_base"], 9.0, 3.0),
        (anchors["eye_l"], 10.0, -3.0),
        (anchors["eye_r"], 10.0, -3.0),
        (anchors["brow_l"], 10.0, 2.5),
        (anchors["brow_r"], 10.0, 2.5),
        (anchors["mouth"], 11.0, 2.5),
        (anchors["chin"], 14.0, 4.0),
    ]
    displaced = vertices.copy()
    for center_pt, sigma, amplitude in bumps:
        w = gaussian_bump(vertices, center_pt, sigma)
        displaced += amplitude * w[:, None] * radial
    return displaced


def _landmark_targets():
    """Named target points for the 68 landmarks, in the pre-shift frame."""
    targets = []

    def add(name, x, y):
        targets.append((name, frontal_point(x, y)))

    # jaw contour: 17 points from left side around the chin to the right side
    for k in range(17):
        alpha = math.radians(180.0 + 180.0 * k / 16.0)
        add(f"jaw_{k}", 54.0 * math.cos(alpha), -14.0 + 60.0 * math.sin(alpha))
    # eyebrows: 5 points each
    for side, sx in (("l", -1.0), ("r", 1.0)):
        for k in range(5):
            x = sx * (14.0 + 7.5 * k)
            y = 13.0 + (4.0 if k == 2 else 2.0 if k in (1, 3) else 0.0)
            add(f"brow_{side}_{k}", x, y)
    # nose: 4 down the bridge, 5 across the base
    for k, y in enumerate((10.0, 0.0, -10.0, -19.0)):
        add(f"nose_{k}", 0.0, y)
    for k, (x, y) in enumerate(((-13.0, -25.0), (-6.0, -27.0), (0.0, -28.0),
                                (6.0, -27.0), (13.0, -25.0)), start=4):
        add(f"nose_{k}", x, y)
    # eyes: 6 points each around the eye centers
    for side, cx in (("l", -31.0), ("r", 31.0)):
        for k in range(6):
            ang = math.radians(60.0 * k)
            add(f"eye_{side}_{k}", cx + 12.0 * math.cos(ang), 6.0 * math.sin(ang))
    # mouth: 12 outer + 6 inner points around (0, -42)
    for k in range(12):
        ang = math.radians(30.0 * k)
        add(f"mouth_{k}", 22.0 * math.cos(ang), -42.0 + 8.0 * math.sin(ang))
    for k in range(6):
        ang = math.radians(60.0 * k)
        add(f"mouth_{12 + k}", 14.0 * math.cos(ang), -42.0 + 4.0 * math.sin(ang))
    # pupils
    add("pupil_l", -31.0, 0.0)
    add("pupil_r", 31.0, 0.0)
    assert len(targets) == N_LANDMARKS
    return targets


def _snap_landmarks(vertices, targets):
    """Greedy nearest-vertex snap with uniqueness, in fixed landmark order."""
    taken = set()
    names, indices = [], []
    for name, target in targets:
        d2 = np.sum((vertices - target) ** 2, axis=1)
        order = np.argsort(d2, kind="stable")
        for idx in order:
            if int(idx) not in taken:
                taken.add(int(idx))
                names.append(name)
                indices.append(int(idx))
                break
    return tuple(names), tuple(indices)


def _feature_labels(vertices):
    anchors = feature_anchors()
    labels = np.full(len(vertices), FEAT_OTHER, dtype="<U6")
    front = vertices[:, 2] > 5.0
    x, y = vertices[:, 0], vertices[:, 1]
    mouth = front & (np.abs(x) < 29.0) & (y > -56.0) & (y < -31.0)
    nose = front & (np.abs(x) < 17.0) & (y > -30.0) & (y < 13.0)
    eyes = front & (
        (((x - anchors["eye_l"][0]) ** 2 + y ** 2) < 19.0 ** 2)
        | (((x - anchors["eye_r"][0]) ** 2 + y ** 2) < 19.0 ** 2)
    )
    labels[mouth] = FEAT_MOUTH
    labels[nose] = FEAT_NOSE
    labels[eyes] = FEAT_EYES
    return labels


def build_template(n_rings=27, n_lon=72):
    """Build the canonical template mesh and its region masks."""
    vertices, faces, uv = _ellipsoid_grid(n_rings, n_lon)
    vertices = _carve(vertices)

    names, indices = _snap_landmarks(vertices, _landmark_targets())

    feature = _feature_labels(vertices)
    region = np.full(len(vertices), REGION_FACE_OTHER, dtype="<U10")
    back = (vertices[:, 2] < 5.0) | (vertices[:, 1] < -85.0)
    region[back] = REGION_BACK_HEAD
    region[(feature != FEAT_OTHER) & ~back] = REGION_FEATURE
    region[list(indices)] = REGION_LANDMARK

    masks = RegionMasks(
        landmark_indices=indices,
        landmark_names=names,
        region_of_vertex=region,
        feature_region_of_vertex=feature,
    )
    mesh = FaceMesh(vertices, faces, uv)

    # put the interpupillary midpoint at the origin
    pl, pr = masks.pupil_indices
    shift = 0.5 * (mesh.vertices[pl] + mesh.vertices[pr])
    mesh = mesh.with_vertices(mesh.vertices - shift)
    anchors = {k: v - shift for k, v in feature_anchors().items()}
    return mesh, masks, anchors


@lru_cache(maxsize=4)
def _cached(n_rings, n_lon):
    return build_template(n_rings, n_lon)


def canonical_template(n_rings=27, n_lon=72):
    """Cached accessor; returns (mesh copy, masks)."""
    mesh, masks, _ = _cached(n_rings, n_lon)
    return mesh.copy(), masks


def canonical_anchors(n_rings=27, n_lon=72):
    """Feature anchor points in the canonical (pupil-centered) frame."""
    _, _, anchors = _cached(n_rings, n_lon)
    return {k: v.copy() for k, v in anchors.items()}


def interpupillary_distance(mesh: FaceMesh, masks: RegionMasks):
    pl, pr = masks.pupil_indices
    return float(np.linalg.norm(mesh.vertices[pl] - mesh.vertices[pr]))
