"""Text-to-3D-face pipeline.

Natural-language face descriptions are parsed into a 24 x 8 one-hot
descriptive code, regressed into the parameters of a PCA morphable shape
model and a linear texture model, and optionally refined against abstract
prompts by render-based optimization.
"""

from .errors import (
    AmbiguityError,
    ArchiveError,
    MeshParseError,
    NumericalError,
    SchemaError,
    TextFaceError,
    TrainingDivergedError,
    ValidationError,
)
from .schema import (
    CODE_WIDTH,
    Attribute,
    AttributeSchema,
    DescriptiveCode,
    code_to_record,
    default_schema,
    merge_code,
    record_to_code,
    split_code,
)
from .meshio import FaceMesh, load_mesh, load_texture, save_mesh, save_texture
from .template import RegionMasks, canonical_template, interpupillary_distance
from .corpus import Corpus, generate_corpus, load_corpus, measure, save_corpus
from .textparse import (
    TextParser,
    compose_text,
    embed_text,
    gen_training_pairs,
    parse_rules,
    train_parser,
)
from .morphable import ShapeSpace, TextureSpace, build_shape_model, build_texture_model
from .shapegen import ShapeRegressor, calibrate_rst, predict_shape, rst_loss, weighted_l1
from .texgen import TextureRegressor, predict_texture
from .align import SimilarityTransform, icp, interpupillary_scale, nicp, procrustes
from .render import RenderView, default_views, render, render_with_map
from .refine import (
    PromptScorer,
    RefineConfig,
    abstract_refine,
    builtin_scorers,
)
from .metrics import (
    EvalConfig,
    IdentityEmbedder,
    chamfer,
    complete_rate,
    evaluate,
    identity_similarity,
)

__version__ = "0.1.0"

__all__ = [
    "AmbiguityError", "ArchiveError", "MeshParseError", "NumericalError",
    "SchemaError", "TextFaceError", "TrainingDivergedError", "ValidationError",
    "CODE_WIDTH", "Attribute", "AttributeSchema", "DescriptiveCode",
    "code_to_record", "default_schema", "merge_code", "record_to_code",
    "split_code", "FaceMesh", "load_mesh", "load_texture", "save_mesh",
    "save_texture", "RegionMasks", "canonical_template",
    "interpupillary_distance", "Corpus", "generate_corpus", "load_corpus",
    "measure", "save_corpus", "TextParser", "compose_text", "embed_text",
    "gen_training_pairs", "parse_rules", "train_parser", "ShapeSpace",
    "TextureSpace", "build_shape_model", "build_texture_model",
    "ShapeRegressor", "calibrate_rst", "predict_shape", "rst_loss",
    "weighted_l1", "TextureRegressor", "predict_texture",
    "SimilarityTransform", "icp", "interpupillary_scale", "nicp", "procrustes",
    "RenderView", "default_views", "render", "render_with_map",
    "PromptScorer", "RefineConfig", "abstract_refine", "builtin_scorers",
    "EvalConfig", "IdentityEmbedder", "chamfer", "complete_rate", "evaluate",
    "identity_similarity",
]
