"""Triangle mesh type and Wavefront-style text IO.

Units are millimetres in the canonical face frame (+x right, +y up,
+z toward viewer, interpupillary midpoint at the origin).
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .errors import MeshParseError, ValidationError


class FaceMesh:
    """Vertices (N x 3, mm), triangle faces (M x 3), per-vertex uv (N x 2)."""

    def __init__(self, vertices, faces, uv=None, texture=None, validate=True):
        self.vertices = np.ascontiguousarray(vertices, dtype=np.float64)
        self.faces = np.ascontiguousarray(faces, dtype=np.int64)
        self.uv = None if uv is None else np.ascontiguousarray(uv, dtype=np.float64)
        self.texture = None if texture is None else np.asarray(texture, dtype=np.float64)
        if validate:
            self._validate()

    def _validate(self):
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise ValidationError("vertices must be N x 3")
        if self.faces.ndim != 2 or self.faces.shape[1] != 3:
            raise ValidationError("faces must be M x 3")
        n = len(self.vertices)
        if self.faces.size and (self.faces.min() < 0 or self.faces.max() >= n):
            raise ValidationError(
                f"face index out of range (N={n}, max index {self.faces.max()})"
            )
        if self.uv is not None and self.uv.shape != (n, 2):
            raise ValidationError("uv must be N x 2")

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_faces(self):
        return len(self.faces)

    def with_vertices(self, vertices):
        """Copy sharing topology/uv/texture but with new vertex positions."""
        return FaceMesh(vertices, self.faces, self.uv, self.texture, validate=False)

    def copy(self):
        return FaceMesh(
            self.vertices.copy(),
            self.faces.copy(),
            None if self.uv is None else self.uv.copy(),
            None if self.texture is None else self.texture.copy(),
            validate=False,
        )

    def face_areas(self):
        tri = self.vertices[self.faces]
        cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        return 0.5 * np.linalg.norm(cross, axis=1)


def save_mesh(mesh: FaceMesh, path):
    """Write `v`/`vt`/`f` lines, 1-based indices, 6-decimal floats, LF endings."""
    lines = []
    for x, y, z in mesh.vertices:
        lines.append(f"v {x:.6f} {y:.6f} {z:.6f}")
    if mesh.uv is not None:
        for u, v in mesh.uv:
            lines.append(f"vt {u:.6f} {v:.6f}")
        for a, b, c in mesh.faces + 1:
            lines.append(f"f {a}/{a} {b}/{b} {c}/{c}")
    else:
        for a, b, c in mesh.faces + 1:
            lines.append(f"f {a} {b} {c}")
    Path(path).write_bytes(("\n".join(lines) + "\n").encode("ascii"))


def load_mesh(path):
    text = Path(path).read_text(encoding="ascii")
    vertices, uv, faces = [], [], []
    any_line = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        any_line = True
        parts = line.split()
        tag = parts[0]
        try:
            if tag == "v":
                if len(parts) != 4:
                    raise MeshParseError("vertex line needs 3 coordinates", lineno)
                vertices.append([float(p) for p in parts[1:]])
            elif tag == "vt":
                if len(parts) != 3:
                    raise MeshParseError("vt line needs 2 coordinates", lineno)
                uv.append([float(p) for p in parts[1:]])
            elif tag == "f":
                if len(parts) != 4:
                    raise MeshParseError("face line needs 3 vertices", lineno)
                faces.append([int(p.split("/")[0]) - 1 for p in parts[1:]])
            # other tags (vn, usemtl, ...) are ignored
        except MeshParseError:
            raise
        except ValueError as exc:
            raise MeshParseError(str(exc), lineno) from exc
    if not any_line:
        raise MeshParseError("empty mesh file", 1)
    if not vertices:
        raise MeshParseError("no vertices in file", 1)
    vertices = np.array(vertices)
    faces = np.array(faces, dtype=np.int64) if faces else np.zeros((0, 3), np.int64)
    uv_arr = np.array(uv) if uv else None
    if uv_arr is not None and len(uv_arr) != len(vertices):
        raise MeshParseError(
            f"expected {len(vertices)} vt lines, got {len(uv_arr)}", 1
        )
    return FaceMesh(vertices, faces, uv_arr)


def save_texture(image, path):
    """Write an H x W x 3 float image in [0,1] as 8-bit lossless PNG."""
    image = np.asarray(image, dtype=np.float64)
    data = np.clip(np.round(image * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(data, mode="RGB").save(str(path), format="PNG")


def load_texture(path):
    with Image.open(str(path)) as im:
        data = np.asarray(im.convert("RGB"), dtype=np.float64)
    return data / 255.0
