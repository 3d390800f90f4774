"""Facial attribute schema and the one-hot descriptive code built on it.

The descriptive code is a 24 x 8 row-wise one-hot matrix: one row per
attribute, hot index = chosen option, index 0 always meaning "unspecified".
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import SchemaError, ValidationError

N_ATTRIBUTES = 24
CODE_WIDTH = 8

SHAPE = "shape"
COLOR = "color"
GENERAL = "general"


@dataclass(frozen=True)
class Attribute:
    """One annotated facial attribute.

    ``phrase`` is the noun phrase used by the sentence composer, ``plural``
    its grammatical number.  ``shape_relevant`` decides which side of the
    shape/texture code split a ``general`` attribute lands on.
    """

    name: str
    category: str
    options: tuple
    antonym_map: tuple = ()
    phrase: str = ""
    plural: bool = False
    shape_relevant: bool = True

    def __post_init__(self):
        if self.category not in (SHAPE, COLOR, GENERAL):
            raise ValidationError(f"bad category {self.category!r} for {self.name}")
        if not (3 <= len(self.options) <= CODE_WIDTH):
            raise ValidationError(
                f"attribute {self.name} must have 3..{CODE_WIDTH} options"
            )
        if self.options[0] != "unspecified":
            raise ValidationError(f"option 0 of {self.name} must be 'unspecified'")
        for a, b in self.antonym_map:
            if a == b or not (0 < a < len(self.options)) or not (0 < b < len(self.options)):
                raise ValidationError(f"bad antonym pair ({a},{b}) in {self.name}")

    @property
    def n_options(self):
        return len(self.options)

    def antonym_of(self, idx):
        """Opposite option index, or None when idx is not in any pair."""
        for a, b in self.antonym_map:
            if idx == a:
                return b
            if idx == b:
                return a
        return None


@dataclass(frozen=True)
class AttributeSchema:
    attributes: tuple

    def __post_init__(self):
        if len(self.attributes) != N_ATTRIBUTES:
            raise ValidationError(f"schema must have exactly {N_ATTRIBUTES} attributes")
        names = [a.name for a in self.attributes]
        if len(set(names)) != len(names):
            raise ValidationError("duplicate attribute names")
        cats = {a.category for a in self.attributes}
        if cats != {SHAPE, COLOR, GENERAL}:
            raise ValidationError("each category needs at least one attribute")

    def __len__(self):
        return len(self.attributes)

    def __iter__(self):
        return iter(self.attributes)

    def __getitem__(self, i):
        return self.attributes[i]

    def index_of(self, name):
        for i, a in enumerate(self.attributes):
            if a.name == name:
                return i
        raise SchemaError(f"unknown attribute {name!r}")

    def shape_row_indices(self):
        """Rows that drive geometry (shape + shape-relevant general)."""
        return [
            i
            for i, a in enumerate(self.attributes)
            if a.category == SHAPE or (a.category == GENERAL and a.shape_relevant)
        ]

    def texture_row_indices(self):
        return [i for i in range(len(self.attributes)) if i not in set(self.shape_row_indices())]

    def content_hash(self):
        """Stable hash of the schema content, for corpus manifests."""
        payload = json.dumps(
            [
                [a.name, a.category, list(a.options), list(map(list, a.antonym_map)),
                 a.phrase, a.plural, a.shape_relevant]
                for a in self.attributes
            ],
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


class DescriptiveCode:
    """24 x 8 one-hot matrix; constructed from per-attribute option indices."""

    def __init__(self, option_indices, schema: AttributeSchema):
        option_indices = list(option_indices)
        if len(option_indices) != len(schema):
            raise ValidationError(
                f"code has {len(option_indices)} rows, schema expects {len(schema)}"
            )
        for i, (idx, attr) in enumerate(zip(option_indices, schema)):
            if not (0 <= idx < attr.n_options):
                raise ValidationError(
                    f"option index {idx} out of range for attribute {attr.name}"
                )
        self.option_indices = tuple(int(i) for i in option_indices)
        self.schema = schema

    @classmethod
    def unspecified(cls, schema):
        return cls([0] * len(schema), schema)

    @classmethod
    def from_matrix(cls, matrix, schema):
        matrix = np.asarray(matrix)
        if matrix.shape != (len(schema), CODE_WIDTH):
            raise ValidationError(f"code matrix must be {len(schema)}x{CODE_WIDTH}")
        if not np.all(matrix.sum(axis=1) == 1):
            raise ValidationError("each code row must sum to exactly 1")
        return cls(matrix.argmax(axis=1), schema)

    def matrix(self):
        m = np.zeros((len(self.schema), CODE_WIDTH))
        m[np.arange(len(self.schema)), self.option_indices] = 1.0
        return m

    def option_name(self, i):
        return self.schema[i].options[self.option_indices[i]]

    def replace(self, **name_to_option):
        """New code with the named attributes set to the named options."""
        idx = list(self.option_indices)
        for name, option in name_to_option.items():
            i = self.schema.index_of(name)
            idx[i] = _option_index(self.schema[i], option)
        return DescriptiveCode(idx, self.schema)

    def __eq__(self, other):
        return (
            isinstance(other, DescriptiveCode)
            and self.option_indices == other.option_indices
        )

    def __hash__(self):
        return hash(self.option_indices)

    def __repr__(self):
        parts = [
            f"{a.name}={self.option_name(i)}"
            for i, a in enumerate(self.schema)
            if self.option_indices[i] != 0
        ]
        return "DescriptiveCode(" + ", ".join(parts) + ")"


def _option_index(attr, option):
    try:
        return attr.options.index(option)
    except ValueError:
        raise SchemaError(
            f"unknown option {option!r} for attribute {attr.name!r}"
        ) from None


def split_code(code: DescriptiveCode, schema: AttributeSchema):
    """Partition the code rows into (shape_rows, texture_rows) submatrices."""
    if code.schema is not schema and code.schema.content_hash() != schema.content_hash():
        raise ValidationError("code was built against a different schema")
    m = code.matrix()
    return m[schema.shape_row_indices()], m[schema.texture_row_indices()]


def merge_code(shape_rows, texture_rows, schema: AttributeSchema):
    """Inverse of split_code: reassemble a full code in schema order."""
    shape_rows = np.asarray(shape_rows)
    texture_rows = np.asarray(texture_rows)
    si, ti = schema.shape_row_indices(), schema.texture_row_indices()
    if shape_rows.shape != (len(si), CODE_WIDTH) or texture_rows.shape != (len(ti), CODE_WIDTH):
        raise ValidationError("submatrix shapes do not match the schema split")
    m = np.zeros((len(schema), CODE_WIDTH))
    m[si] = shape_rows
    m[ti] = texture_rows
    return DescriptiveCode.from_matrix(m, schema)


def code_to_record(code: DescriptiveCode, record_id="", freeform=""):
    """Serialize to the annotation record; unspecified rows are omitted."""
    attrs = {
        a.name: code.option_name(i)
        for i, a in enumerate(code.schema)
        if code.option_indices[i] != 0
    }
    return {"id": record_id, "attributes": attrs, "freeform": freeform}


def record_to_code(record, schema: AttributeSchema):
    """Parse an annotation record; missing attributes default to unspecified."""
    attrs = record.get("attributes", {})
    idx = [0] * len(schema)
    for name, option in attrs.items():
        i = schema.index_of(name)
        idx[i] = _option_index(schema[i], option)
    return DescriptiveCode(idx, schema)


def default_schema():
    """The package's fixed 24-attribute schema (14 shape, 6 color, 4 general)."""
    A = Attribute
    return AttributeSchema(
        attributes=(
            A("face_shape", SHAPE, ("unspecified", "slender", "oval", "round", "squarish"),
              ((1, 4),), phrase="face"),
            A("jaw_width", SHAPE, ("unspecified", "tapered", "mid-width", "broad"),
              ((1, 3),), phrase="jaw"),
            A("chin_shape", SHAPE, ("unspecified", "pointed", "rounded", "squared"),
              ((1, 3),), phrase="chin"),
            A("cheek_fullness", SHAPE, ("unspecified", "hollow", "average", "full"),
              ((1, 3),), phrase="cheeks", plural=True),
            A("forehead_height", SHAPE, ("unspecified", "low", "mid-height", "high"),
              ((1, 3),), phrase="forehead"),
            A("eye_size", SHAPE, ("unspecified", "small", "medium-sized", "big"),
              ((1, 3),), phrase="eyes", plural=True),
            A("eye_shape", SHAPE, ("unspecified", "slitted", "almond-shaped", "circular"),
              ((1, 3),), phrase="eyes", plural=True),
            A("eye_spacing", SHAPE, ("unspecified", "close-set", "evenly-set", "wide-set"),
              ((1, 3),), phrase="eyes", plural=True),
            A("eyebrow_thickness", SHAPE, ("unspecified", "wispy", "defined", "bushy"),
              ((1, 3),), phrase="eyebrows", plural=True),
            A("eyebrow_shape", SHAPE, ("unspecified", "straight", "arched", "curvy"),
              ((1, 3),), phrase="eyebrows", plural=True),
            A("nose_size", SHAPE, ("unspecified", "petite", "mid-sized", "large"),
              ((1, 3),), phrase="nose"),
            A("nose_width", SHAPE, ("unspecified", "pinched", "regular", "flared"),
              ((1, 3),), phrase="nose"),
            A("mouth_width", SHAPE, ("unspecified", "narrow", "medium-wide", "wide"),
              ((1, 3),), phrase="mouth"),
            A("lip_thickness", SHAPE, ("unspecified", "thin", "medium-full", "thick"),
              ((1, 3),), phrase="lips", plural=True),
            A("skin_tone", COLOR, ("unspecified", "pale", "fair", "tan", "bronzed", "dark"),
              ((1, 5),), phrase="skin"),
            A("lip_color", COLOR, ("unspecified", "rosy", "pink", "red", "crimson"),
              ((1, 4),), phrase="lips", plural=True),
            A("eyebrow_color", COLOR, ("unspecified", "light-brown", "brown", "dark-brown", "black"),
              ((1, 4),), phrase="eyebrows", plural=True),
            A("beard_style", COLOR, ("unspecified", "clean-shaven", "stubbled", "short-bearded", "full-bearded"),
              ((1, 4),), phrase="beard"),
            A("beard_color", COLOR, ("unspecified", "sandy", "auburn", "chestnut", "jet-black"),
              ((1, 4),), phrase="beard"),
            A("makeup", COLOR, ("unspecified", "barefaced", "lightly-made-up", "heavily-made-up"),
              ((1, 3),), phrase="makeup"),
            A("gender", GENERAL, ("unspecified", "male", "female"),
              ((1, 2),), phrase="person", shape_relevant=True),
            A("age_band", GENERAL, ("unspecified", "youthful", "middle-aged", "elderly"),
              ((1, 3),), phrase="person", shape_relevant=True),
            A("race", GENERAL, ("unspecified", "Asian", "European", "African", "Latino"),
              (), phrase="person", shape_relevant=False),
            A("overall_build", GENERAL, ("unspecified", "slim", "average-built", "heavyset"),
              ((1, 3),), phrase="build", shape_relevant=True),
        )
    )
