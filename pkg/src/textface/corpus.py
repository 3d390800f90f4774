"""Synthetic annotated face corpus.

Each identity is the canonical template plus a sum of per-attribute smooth
displacement fields, with amplitudes tabulated per option rank and perturbed
by +-20% continuous jitter; colors are painted into the UV texture the same
way.  The generator knows all its attributes, so every annotation row is
specified and every shape attribute comes with a geometric measurement that
is strictly monotone in option rank.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import meshio
from .errors import ValidationError
from .meshio import FaceMesh
from .schema import AttributeSchema, DescriptiveCode, code_to_record, record_to_code
from .template import (
    CENTER_Y,
    SEMI_AXES,
    canonical_anchors,
    canonical_template,
    frontal_point,
    gaussian_bump,
)

DEFAULT_TEXTURE_SIZE = 256
DEFAULT_CORPUS_SIZE = 256
TRAIN_FRACTION = 0.8


@dataclass(frozen=True)
class IdentityParams:
    seed: int
    attr_options: tuple        # 24 option indices, all >= 1 for generated faces
    continuous_jitter: tuple   # 24 reals in [-0.5, 0.5]

    @classmethod
    def random(cls, schema: AttributeSchema, seed: int):
        rng = np.random.default_rng(seed)
        options = tuple(int(rng.integers(1, a.n_options)) for a in schema)
        jitter = tuple(float(j) for j in rng.uniform(-0.5, 0.5, size=len(schema)))
        return cls(int(seed), options, jitter)


@dataclass
class CorpusEntry:
    entry_id: str
    mesh: FaceMesh
    texture: np.ndarray
    code: DescriptiveCode
    identity: IdentityParams


@dataclass
class Corpus:
    entries: list
    schema: AttributeSchema
    train_ids: list
    test_ids: list

    def __len__(self):
        return len(self.entries)

    def entry(self, entry_id):
        for e in self.entries:
            if e.entry_id == entry_id:
                return e
        raise KeyError(entry_id)

    def train_entries(self):
        ids = set(self.train_ids)
        return [e for e in self.entries if e.entry_id in ids]

    def test_entries(self):
        ids = set(self.test_ids)
        return [e for e in self.entries if e.entry_id in ids]


# ---------------------------------------------------------------------------
# shape deformation fields
# ---------------------------------------------------------------------------

def _amp(lo, hi, rank, n_options, jitter):
    """Option-rank amplitude, linear from lo to hi, jittered by +-20%."""
    frac = (rank - 1) / max(n_options - 2, 1)
    return (lo + frac * (hi - lo)) * (1.0 + 0.4 * jitter)


def _lateral_pair(vertices, left, right, sigma):
    """Widening pattern: push left-anchor region -x, right-anchor region +x."""
    wl = gaussian_bump(vertices, left, sigma)
    wr = gaussian_bump(vertices, right, sigma)
    out = np.zeros_like(vertices)
    out[:, 0] = wr - wl
    return out


def _axis_bump(vertices, center, sigma, axis):
    out = np.zeros_like(vertices)
    out[:, axis] = gaussian_bump(vertices, center, sigma)
    return out


def _stretch(vertices, center, sigma, axis):
    """Symmetric expansion along one axis about a center point."""
    w = gaussian_bump(vertices, center, sigma)
    out = np.zeros_like(vertices)
    out[:, axis] = np.sign(vertices[:, axis] - center[axis]) * w
    return out


def _radial_xy(vertices, center, sigma, scale=12.0):
    """In-plane magnification away from a center (eye enlargement)."""
    w = gaussian_bump(vertices, center, sigma)
    out = np.zeros_like(vertices)
    out[:, 0] = (vertices[:, 0] - center[0]) / scale * w
    out[:, 1] = (vertices[:, 1] - center[1]) / scale * w
    return out


@lru_cache(maxsize=4)
def _field_table(n_rings=27, n_lon=72):
    """Unit displacement pattern (N x 3) and amplitude range per attribute."""
    mesh, _ = canonical_template(n_rings, n_lon)
    v = mesh.vertices
    a = canonical_anchors(n_rings, n_lon)
    wing_l = a["nose_base"] + np.array([-13.0, 3.0, 0.0])
    wing_r = a["nose_base"] + np.array([13.0, 3.0, 0.0])
    build = np.zeros_like(v)
    build[:, 0] = v[:, 0] / SEMI_AXES[0]
    build[:, 2] = 0.5 * v[:, 2] / SEMI_AXES[2]

    table = {
        "face_shape": (_lateral_pair(v, a["cheek_l"], a["cheek_r"], 30.0), (-5.0, 5.0)),
        "jaw_width": (_lateral_pair(v, a["jaw_l"], a["jaw_r"], 18.0), (-4.0, 4.0)),
        "chin_shape": (
            _lateral_pair(v, a["chin"] + [-10, 2, 0], a["chin"] + [10, 2, 0], 12.0),
            (-3.0, 3.0),
        ),
        "cheek_fullness": (
            _axis_bump(v, a["cheek_l"], 16.0, 2) + _axis_bump(v, a["cheek_r"], 16.0, 2),
            (-3.5, 3.5),
        ),
        "forehead_height": (_axis_bump(v, a["forehead"], 20.0, 1), (-4.0, 4.0)),
        "eye_size": (
            _radial_xy(v, a["eye_l"], 14.0) + _radial_xy(v, a["eye_r"], 14.0),
            (-3.0, 3.0),
        ),
        "eye_shape": (
            _stretch(v, a["eye_l"], 10.0, 1) + _stretch(v, a["eye_r"], 10.0, 1),
            (-2.0, 2.0),
        ),
        "eye_spacing": (_lateral_pair(v, a["eye_l"], a["eye_r"], 12.0), (-3.5, 3.5)),
        "eyebrow_thickness": (
            _axis_bump(v, a["brow_l"], 9.0, 2) + _axis_bump(v, a["brow_r"], 9.0, 2),
            (-1.5, 2.5),
        ),
        "eyebrow_shape": (
            _axis_bump(v, a["brow_l"], 8.0, 1) + _axis_bump(v, a["brow_r"], 8.0, 1),
            (-2.0, 2.0),
        ),
        "nose_size": (_axis_bump(v, a["nose_tip"], 12.0, 2), (-3.5, 4.5)),
        "nose_width": (_lateral_pair(v, wing_l, wing_r, 8.0), (-2.5, 2.5)),
        "mouth_width": (_lateral_pair(v, a["mouth_l"], a["mouth_r"], 10.0), (-4.0, 4.0)),
        "lip_thickness": (_stretch(v, a["mouth"], 10.0, 1), (-2.5, 2.5)),
        "gender": (
            _lateral_pair(v, a["jaw_l"], a["jaw_r"], 20.0)
            + 0.5 * (_axis_bump(v, a["brow_l"], 10.0, 2) + _axis_bump(v, a["brow_r"], 10.0, 2)),
            (2.0, -2.0),
        ),
        "age_band": (
            -(_axis_bump(v, a["cheek_l"], 16.0, 1) + _axis_bump(v, a["cheek_r"], 16.0, 1)),
            (0.0, 3.0),
        ),
        "overall_build": (build, (-1.5, 1.5)),
    }
    return table


def shape_displacement(code: DescriptiveCode, jitter, n_rings=27, n_lon=72):
    """Total per-vertex displacement for a code, unspecified rows contributing 0."""
    table = _field_table(n_rings, n_lon)
    schema = code.schema
    mesh, _ = canonical_template(n_rings, n_lon)
    disp = np.zeros_like(mesh.vertices)
    for i, attr in enumerate(schema):
        rank = code.option_indices[i]
        if rank == 0 or attr.name not in table:
            continue
        pattern, (lo, hi) = table[attr.name]
        disp += _amp(lo, hi, rank, attr.n_options, jitter[i]) * pattern
    return disp


# ---------------------------------------------------------------------------
# geometric measurement table (the monotonicity oracle)
# ---------------------------------------------------------------------------

def _lm(mesh, masks, name):
    return mesh.vertices[masks.landmark(name)]


def _dist(mesh, masks, a, b):
    return float(np.linalg.norm(_lm(mesh, masks, a) - _lm(mesh, masks, b)))


MEASUREMENTS = {
    "face_shape": lambda m, k: _dist(m, k, "jaw_2", "jaw_14"),
    "jaw_width": lambda m, k: _dist(m, k, "jaw_4", "jaw_12"),
    "chin_shape": lambda m, k: _dist(m, k, "jaw_7", "jaw_9"),
    "cheek_fullness": lambda m, k: 0.5
    * float(_lm(m, k, "jaw_2")[2] + _lm(m, k, "jaw_14")[2]),
    "forehead_height": lambda m, k: float(
        m.vertices[_probe(k, "forehead")][1]
    ),
    "eye_size": lambda m, k: _dist(m, k, "eye_l_0", "eye_l_3"),
    "eye_shape": lambda m, k: abs(
        float(_lm(m, k, "eye_l_1")[1] - _lm(m, k, "eye_l_5")[1])
    ),
    "eye_spacing": lambda m, k: _dist(m, k, "pupil_l", "pupil_r"),
    "eyebrow_thickness": lambda m, k: 0.5
    * float(_lm(m, k, "brow_l_2")[2] + _lm(m, k, "brow_r_2")[2]),
    "eyebrow_shape": lambda m, k: float(
        _lm(m, k, "brow_l_2")[1] - 0.5 * (_lm(m, k, "brow_l_0")[1] + _lm(m, k, "brow_l_4")[1])
    ),
    "nose_size": lambda m, k: float(_lm(m, k, "nose_3")[2]),
    "nose_width": lambda m, k: _dist(m, k, "nose_4", "nose_8"),
    "mouth_width": lambda m, k: _dist(m, k, "mouth_0", "mouth_6"),
    "lip_thickness": lambda m, k: abs(
        float(_lm(m, k, "mouth_3")[1] - _lm(m, k, "mouth_9")[1])
    ),
    "gender": lambda m, k: _dist(m, k, "jaw_4", "jaw_12"),
    "age_band": lambda m, k: -0.5
    * float(_lm(m, k, "jaw_2")[1] + _lm(m, k, "jaw_14")[1]),
    "overall_build": lambda m, k: _dist(m, k, "jaw_0", "jaw_16"),
}

_PROBE_CACHE = {}


def _probe(masks, anchor_name):
    key = (id(masks), anchor_name)
    if key not in _PROBE_CACHE:
        mesh, _ = canonical_template()
        target = canonical_anchors()[anchor_name]
        _PROBE_CACHE[key] = int(np.argmin(np.sum((mesh.vertices - target) ** 2, axis=1)))
    return _PROBE_CACHE[key]


def measure(attr_name, mesh, masks):
    """Evaluate the controlled geometric measurement for one shape attribute."""
    return MEASUREMENTS[attr_name](mesh, masks)


# ---------------------------------------------------------------------------
# texture painting
# ---------------------------------------------------------------------------

_SKIN_TONES = {
    1: (0.95, 0.87, 0.80),
    2: (0.87, 0.77, 0.66),
    3: (0.76, 0.62, 0.49),
    4: (0.60, 0.45, 0.33),
    5: (0.42, 0.30, 0.22),
}
_LIP_COLORS = {
    1: (0.85, 0.45, 0.45),
    2: (0.85, 0.35, 0.42),
    3: (0.80, 0.18, 0.22),
    4: (0.65, 0.08, 0.15),
}
_LIP_ALPHAS = {1: 0.35, 2: 0.45, 3: 0.60, 4: 0.75}
_BROW_COLORS = {
    1: (0.55, 0.42, 0.30),
    2: (0.40, 0.28, 0.18),
    3: (0.25, 0.17, 0.11),
    4: (0.10, 0.08, 0.07),
}
_BEARD_COLORS = {
    1: (0.65, 0.55, 0.40),
    2: (0.45, 0.28, 0.18),
    3: (0.35, 0.22, 0.12),
    4: (0.08, 0.07, 0.06),
}
_BEARD_ALPHAS = {1: 0.0, 2: 0.22, 3: 0.42, 4: 0.62}
_RACE_TINTS = {
    1: (1.02, 1.00, 0.96),
    2: (1.02, 1.00, 1.00),
    3: (0.94, 0.94, 0.96),
    4: (1.00, 0.98, 0.94),
}


@lru_cache(maxsize=4)
def uv_masks(resolution=DEFAULT_TEXTURE_SIZE):
    """Boolean texture-space region masks aligned with the template UV layout."""
    a, b, c = SEMI_AXES
    u = (np.arange(resolution) + 0.5) / resolution
    vv = (np.arange(resolution) + 0.5) / resolution
    uu, vg = np.meshgrid(u, 1.0 - vv)  # image row 0 = v=1 (top of head)
    theta = np.pi * (1.0 - vg)
    phi = 2.0 * np.pi * uu - np.pi
    x = a * np.sin(theta) * np.sin(phi)
    y = CENTER_Y + b * np.cos(theta)
    z = c * np.sin(theta) * np.cos(phi)

    front = z > 5.0
    lips = front & (np.abs(x) < 23.0) & (y > -51.0) & (y < -33.0)
    brows = front & (np.abs(x) > 12.0) & (np.abs(x) < 46.0) & (y > 9.0) & (y < 21.0)
    eyes = front & (
        ((x + 31.0) ** 2 + y ** 2 < 14.0 ** 2) | ((x - 31.0) ** 2 + y ** 2 < 14.0 ** 2)
    )
    nose = front & (np.abs(x) < 15.0) & (y > -29.0) & (y < 12.0)
    beard = front & (y < -28.0) & (y > -85.0) & ~lips & ~nose
    cheeks = front & (np.abs(x) > 25.0) & (np.abs(x) < 55.0) & (y > -45.0) & (y < -5.0)
    skin = ~(lips | brows | eyes)
    return {
        "front": front,
        "lips": lips,
        "brows": brows,
        "eyes": eyes,
        "nose": nose,
        "beard": beard,
        "cheeks": cheeks,
        "skin": skin,
        "skin_front": skin & front,
    }


def _blend(img, mask, color, alpha):
    if alpha <= 0.0:
        return
    color = np.asarray(color)
    img[mask] = (1.0 - alpha) * img[mask] + alpha * color


def paint_texture(code: DescriptiveCode, jitter, resolution=DEFAULT_TEXTURE_SIZE):
    """Deterministic UV texture for a code; monotone recoloring per option rank."""
    masks = uv_masks(resolution)
    schema = code.schema

    def rank(name):
        return code.option_indices[schema.index_of(name)]

    def jit(name):
        return jitter[schema.index_of(name)]

    tone = rank("skin_tone") or 3
    base = np.array(_SKIN_TONES[tone]) * (1.0 + 0.08 * jit("skin_tone"))
    race = rank("race")
    if race:
        base = base * np.array(_RACE_TINTS[race])
    img = np.clip(np.ones((resolution, resolution, 3)) * base, 0.0, 1.0)

    lip = rank("lip_color")
    if lip:
        _blend(img, masks["lips"], _LIP_COLORS[lip],
               _LIP_ALPHAS[lip] * (1.0 + 0.4 * jit("lip_color")))
    brow = rank("eyebrow_color")
    if brow:
        _blend(img, masks["brows"], _BROW_COLORS[brow],
               0.8 * (1.0 + 0.2 * jit("eyebrow_color")))
    style = rank("beard_style")
    if style:
        bcolor = _BEARD_COLORS[rank("beard_color") or 3]
        _blend(img, masks["beard"], bcolor,
               _BEARD_ALPHAS[style] * (1.0 + 0.4 * jit("beard_style")))
    makeup = rank("makeup")
    if makeup >= 2:
        strength = 0.5 * (makeup - 1) * (1.0 + 0.4 * jit("makeup"))
        _blend(img, masks["lips"], (0.80, 0.15, 0.25), 0.4 * strength)
        _blend(img, masks["cheeks"], (0.90, 0.55, 0.55), 0.15 * strength)
        _blend(img, masks["eyes"], (0.35, 0.25, 0.35), 0.25 * strength)
    return np.clip(img, 0.0, 1.0)


def skin_luminance(texture, resolution=None):
    """Mean luminance over the frontal skin region of a UV texture."""
    resolution = resolution or texture.shape[0]
    mask = uv_masks(resolution)["skin_front"]
    lum = texture @ np.array([0.299, 0.587, 0.114])
    return float(lum[mask].mean())


def lip_redness(texture):
    """Mean (R - (G+B)/2) over the lip region of a UV texture."""
    mask = uv_masks(texture.shape[0])["lips"]
    region = texture[mask]
    return float((region[:, 0] - 0.5 * (region[:, 1] + region[:, 2])).mean())


# ---------------------------------------------------------------------------
# identity and corpus generation
# ---------------------------------------------------------------------------

def generate_identity(schema: AttributeSchema, params: IdentityParams,
                      resolution=DEFAULT_TEXTURE_SIZE):
    """Deterministic (mesh, texture, code) for one identity."""
    code = DescriptiveCode(params.attr_options, schema)
    mesh, _ = canonical_template()
    disp = shape_displacement(code, params.continuous_jitter)
    out = mesh.with_vertices(mesh.vertices + disp)
    texture = paint_texture(code, params.continuous_jitter, resolution)
    out.texture = texture
    return out, texture, code


def generate_corpus(schema: AttributeSchema, count=DEFAULT_CORPUS_SIZE,
                    master_seed=0, resolution=DEFAULT_TEXTURE_SIZE):
    """Corpus of ``count`` identities with a deterministic 80/20 split."""
    if count < 2:
        raise ValidationError("corpus needs at least 2 identities")
    rng = np.random.default_rng(master_seed)
    seeds = rng.integers(0, 2 ** 63 - 1, size=count)
    entries = []
    for i, seed in enumerate(seeds):
        params = IdentityParams.random(schema, int(seed))
        mesh, texture, code = generate_identity(schema, params, resolution)
        entries.append(CorpusEntry(f"id_{i:04d}", mesh, texture, code, params))

    order = rng.permutation(count)
    n_train = int(math.floor(count * TRAIN_FRACTION))
    train_ids = sorted(entries[i].entry_id for i in order[:n_train])
    test_ids = sorted(entries[i].entry_id for i in order[n_train:])
    return Corpus(entries, schema, train_ids, test_ids)


def save_corpus(corpus: Corpus, root):
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    for e in corpus.entries:
        d = root / e.entry_id
        d.mkdir(exist_ok=True)
        meshio.save_mesh(e.mesh, d / "mesh.obj")
        meshio.save_texture(e.texture, d / "tex.png")
        record = code_to_record(e.code, record_id=e.entry_id)
        record["identity"] = {
            "seed": e.identity.seed,
            "attr_options": list(e.identity.attr_options),
            "continuous_jitter": list(e.identity.continuous_jitter),
        }
        (d / "annotation.json").write_text(json.dumps(record, indent=1) + "\n")
    manifest = {
        "schema_hash": corpus.schema.content_hash(),
        "count": len(corpus),
        "train": corpus.train_ids,
        "test": corpus.test_ids,
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n")


def load_corpus(root, schema: AttributeSchema):
    root = Path(root)
    manifest = json.loads((root / "manifest.json").read_text())
    if manifest["schema_hash"] != schema.content_hash():
        raise ValidationError("corpus was generated with a different schema")
    entries = []
    for entry_id in sorted(manifest["train"] + manifest["test"]):
        d = root / entry_id
        record = json.loads((d / "annotation.json").read_text())
        code = record_to_code(record, schema)
        ident = record["identity"]
        params = IdentityParams(
            ident["seed"], tuple(ident["attr_options"]), tuple(ident["continuous_jitter"])
        )
        mesh = meshio.load_mesh(d / "mesh.obj")
        texture = meshio.load_texture(d / "tex.png")
        mesh.texture = texture
        entries.append(CorpusEntry(entry_id, mesh, texture, code, params))
    return Corpus(entries, schema, manifest["train"], manifest["test"])
