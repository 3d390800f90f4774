"""Linear statistical models: PCA shape space and PCA texture space.

Shape parameters are singular-value weighted so each retained component is
roughly unit variance over the training corpus; synthesis is
``mean + B diag(sigma) s`` and fitting is its orthonormal projection.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from . import archive
from .errors import ValidationError
from .meshio import FaceMesh

SIGMA_FLOOR = 1e-9


def _signed_svd(centered):
    """Thin SVD with the per-column sign fixed: largest-|entry| positive."""
    u, s, vt = np.linalg.svd(centered, full_matrices=False)
    basis = vt.T  # (dim, k) orthonormal columns
    for k in range(basis.shape[1]):
        j = np.argmax(np.abs(basis[:, k]))
        if basis[j, k] < 0:
            basis[:, k] = -basis[:, k]
            u[:, k] = -u[:, k]
    return u, s, basis


class ShapeSpace(BaseEstimator, TransformerMixin):
    """PCA morphable shape model over topologically identical meshes."""

    def __init__(self, n_components=32):
        self.n_components = n_components

    def fit(self, meshes, y=None):
        meshes = list(meshes)
        m = self.n_components
        if len(meshes) < m + 1:
            raise ValidationError(
                f"need at least {m + 1} meshes for {m} components, got {len(meshes)}"
            )
        ref = meshes[0]
        for mesh in meshes[1:]:
            if mesh.vertices.shape != ref.vertices.shape or not np.array_equal(
                mesh.faces, ref.faces
            ):
                raise ValidationError("meshes do not share the canonical topology")
        data = np.stack([mesh.vertices.reshape(-1) for mesh in meshes])
        self.mean_ = data.mean(axis=0)
        centered = data - self.mean_
        _, s, basis = _signed_svd(centered)
        # sample-std scaling so transformed components are ~unit variance
        self.full_spectrum_ = s.copy()
        self.basis_ = basis[:, :m]
        self.singular_values_ = s[:m] / np.sqrt(max(len(meshes) - 1, 1))
        self.template_ = ref.with_vertices(self.mean_.reshape(-1, 3))
        self.n_vertices_ = ref.n_vertices
        return self

    def _check_fitted(self):
        if not hasattr(self, "basis_"):
            raise ValidationError("ShapeSpace is not fitted")

    @property
    def mean_mesh(self):
        self._check_fitted()
        return self.template_.copy()

    def retained_variance_fraction(self):
        self._check_fitted()
        total = np.sum(self.full_spectrum_ ** 2)
        if total == 0.0:
            return 1.0
        return float(np.sum(self.full_spectrum_[: self.n_components] ** 2) / total)

    def inverse_transform(self, s):
        """Synthesize a mesh from shape parameters (s=0 gives the mean)."""
        self._check_fitted()
        s = np.asarray(s, dtype=np.float64)
        if s.shape != (self.n_components,):
            raise ValidationError(
                f"expected {self.n_components} shape parameters, got shape {s.shape}"
            )
        flat = self.mean_ + self.basis_ @ (self.singular_values_ * s)
        return self.template_.with_vertices(flat.reshape(-1, 3))

    def synthesize(self, s):
        return self.inverse_transform(s)

    def transform(self, mesh):
        """Project a mesh onto the shape space; near-null components go to 0."""
        self._check_fitted()
        if isinstance(mesh, FaceMesh):
            if mesh.n_vertices != self.n_vertices_:
                raise ValidationError("mesh topology does not match the model")
            flat = mesh.vertices.reshape(-1)
        else:
            flat = np.asarray(mesh, dtype=np.float64).reshape(-1)
        raw = self.basis_.T @ (flat - self.mean_)
        safe = np.where(self.singular_values_ < SIGMA_FLOOR, 1.0, self.singular_values_)
        s = raw / safe
        s[self.singular_values_ < SIGMA_FLOOR] = 0.0
        return s

    def fit_shape(self, mesh):
        return self.transform(mesh)

    def vertex_jacobian_diag(self):
        """The linear map s -> flattened vertices is basis_ * sigma per column."""
        self._check_fitted()
        return self.basis_ * self.singular_values_

    def save(self, path):
        self._check_fitted()
        archive.save_archive(
            path,
            {
                "mean": self.mean_,
                "basis": self.basis_,
                "sigma": self.singular_values_,
                "full_spectrum": self.full_spectrum_,
                "faces": self.template_.faces.astype(np.float64),
                "uv": self.template_.uv,
            },
            meta={"kind": "shape_space", "n_components": self.n_components},
        )

    @classmethod
    def load(cls, path):
        arrays, meta = archive.load_archive(path)
        model = cls(n_components=meta["n_components"])
        model.mean_ = arrays["mean"]
        model.basis_ = arrays["basis"]
        model.singular_values_ = arrays["sigma"]
        model.full_spectrum_ = arrays["full_spectrum"]
        faces = arrays["faces"].astype(np.int64)
        model.template_ = FaceMesh(arrays["mean"].reshape(-1, 3), faces, arrays["uv"])
        model.n_vertices_ = model.template_.n_vertices
        return model


class TextureSpace(BaseEstimator, TransformerMixin):
    """PCA texture model over flattened RGB UV images (unclamped model space)."""

    def __init__(self, n_components=24):
        self.n_components = n_components

    def fit(self, textures, y=None):
        textures = list(textures)
        m = self.n_components
        if len(textures) < m + 1:
            raise ValidationError(
                f"need at least {m + 1} textures for {m} components, got {len(textures)}"
            )
        shape = textures[0].shape
        for t in textures[1:]:
            if t.shape != shape:
                raise ValidationError("textures must share one resolution")
        data = np.stack([np.asarray(t, dtype=np.float64).reshape(-1) for t in textures])
        self.image_shape_ = shape
        self.mean_ = data.mean(axis=0)
        _, s, basis = _signed_svd(data - self.mean_)
        self.full_spectrum_ = s.copy()
        self.basis_ = basis[:, :m]
        self.singular_values_ = s[:m] / np.sqrt(max(len(textures) - 1, 1))
        return self

    def _check_fitted(self):
        if not hasattr(self, "basis_"):
            raise ValidationError("TextureSpace is not fitted")

    @property
    def mean_texture(self):
        self._check_fitted()
        return self.mean_.reshape(self.image_shape_)

    def inverse_transform(self, t, clamp=False):
        """Synthesize a texture image; clamping is a render-time concern."""
        self._check_fitted()
        t = np.asarray(t, dtype=np.float64)
        if t.shape != (self.n_components,):
            raise ValidationError(
                f"expected {self.n_components} texture parameters, got shape {t.shape}"
            )
        img = (self.mean_ + self.basis_ @ (self.singular_values_ * t)).reshape(
            self.image_shape_
        )
        return np.clip(img, 0.0, 1.0) if clamp else img

    def synthesize(self, t, clamp=False):
        return self.inverse_transform(t, clamp=clamp)

    def transform(self, image):
        self._check_fitted()
        flat = np.asarray(image, dtype=np.float64).reshape(-1)
        if flat.size != self.mean_.size:
            raise ValidationError("texture resolution does not match the model")
        raw = self.basis_.T @ (flat - self.mean_)
        safe = np.where(self.singular_values_ < SIGMA_FLOOR, 1.0, self.singular_values_)
        t = raw / safe
        t[self.singular_values_ < SIGMA_FLOOR] = 0.0
        return t

    def fit_texture(self, image):
        return self.transform(image)

    def save(self, path):
        self._check_fitted()
        archive.save_archive(
            path,
            {
                "mean": self.mean_,
                "basis": self.basis_,
                "sigma": self.singular_values_,
                "full_spectrum": self.full_spectrum_,
                "image_shape": np.array(self.image_shape_, dtype=np.float64),
            },
            meta={"kind": "texture_space", "n_components": self.n_components},
        )

    @classmethod
    def load(cls, path):
        arrays, meta = archive.load_archive(path)
        model = cls(n_components=meta["n_components"])
        model.mean_ = arrays["mean"]
        model.basis_ = arrays["basis"]
        model.singular_values_ = arrays["sigma"]
        model.full_spectrum_ = arrays["full_spectrum"]
        model.image_shape_ = tuple(int(v) for v in arrays["image_shape"])
        return model


def build_shape_model(meshes, n_components=32):
    return ShapeSpace(n_components=n_components).fit(meshes)


def build_texture_model(textures, n_components=24):
    return TextureSpace(n_components=n_components).fit(textures)
