"""Command-line pipeline driver.

Every stage is a subcommand writing into ``out/{stage}/``; a JSON config file
supplies defaults, flags override them, and the effective configuration is
echoed into each stage's output directory.  Exit codes: 0 success, 2 for
validation/usage problems, 1 for runtime failures.
"""

from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

import click
import numpy as np

from .corpus import generate_corpus, load_corpus, save_corpus
from .errors import (
    AmbiguityError,
    ArchiveError,
    MeshParseError,
    SchemaError,
    TextFaceError,
    ValidationError,
)
from .meshio import load_mesh, load_texture, save_mesh, save_texture
from .metrics import EvalConfig, evaluate
from .morphable import ShapeSpace, TextureSpace
from .refine import RefineConfig, abstract_refine, builtin_scorers
from .render import RenderView, default_views, render
from .schema import code_to_record, default_schema, record_to_code
from .shapegen import ShapeRegressor, predict_shape
from .template import canonical_template
from .texgen import TextureRegressor, predict_texture
from .textparse import TextParser, compose_text, gen_training_pairs, parse_rules

_USAGE_ERRORS = (ValidationError, SchemaError, MeshParseError, AmbiguityError, ArchiveError)


def _stage(fn):
    """Shared error-to-exit-code mapping for subcommands."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except _USAGE_ERRORS as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(2)
        except TextFaceError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(1)

    return wrapper


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="JSON file with default option values.")
@click.option("--out", "out_dir", default="out", show_default=True,
              help="Root directory for all stage outputs.")
@click.pass_context
def main(ctx, config_path, out_dir):
    """Text-to-3D-face pipeline."""
    defaults = {}
    if config_path:
        with open(config_path, encoding="utf-8") as fh:
            defaults = json.load(fh)
        if not isinstance(defaults, dict):
            raise click.UsageError("config file must hold a JSON object")
    ctx.obj = {"defaults": defaults, "out": Path(out_dir)}


def _value(ctx, key, flag_value, fallback):
    """Priority: explicit flag > config file > built-in default."""
    if flag_value is not None:
        return flag_value
    return ctx.obj["defaults"].get(key, fallback)


def _stage_dir(ctx, name, effective):
    path = ctx.obj["out"] / name
    path.mkdir(parents=True, exist_ok=True)
    with open(path / "effective_config.json", "w", encoding="utf-8") as fh:
        json.dump(effective, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _log(msg):
    click.echo(msg, err=True)


# ---------------------------------------------------------------------------
# data + model building stages
# ---------------------------------------------------------------------------

@main.command("corpus-gen")
@click.option("--count", type=int, default=None, help="Number of identities.")
@click.option("--seed", type=int, default=None, help="Master random seed.")
@click.option("--resolution", type=int, default=None, help="Texture resolution.")
@click.pass_context
@_stage
def corpus_gen(ctx, count, seed, resolution):
    """Generate the synthetic annotated face corpus."""
    count = int(_value(ctx, "corpus_count", count, 256))
    seed = int(_value(ctx, "corpus_seed", seed, 0))
    resolution = int(_value(ctx, "texture_resolution", resolution, 256))
    out = _stage_dir(ctx, "corpus", {"count": count, "seed": seed, "resolution": resolution})
    schema = default_schema()
    corpus = generate_corpus(schema, count=count, master_seed=seed, resolution=resolution)
    save_corpus(corpus, out)
    _log(f"corpus: {count} identities -> {out}")


def _load_corpus(ctx):
    root = ctx.obj["out"] / "corpus"
    if not (root / "manifest.json").exists():
        raise ValidationError(f"no corpus at {root}; run corpus-gen first")
    return load_corpus(root, default_schema())


@main.command("build-3dmm")
@click.option("--components", type=int, default=None, help="Retained shape components.")
@click.pass_context
@_stage
def build_3dmm(ctx, components):
    """Fit the PCA shape model on the corpus training meshes."""
    m = int(_value(ctx, "shape_components", components, 32))
    corpus = _load_corpus(ctx)
    out = _stage_dir(ctx, "shape_model", {"components": m})
    model = ShapeSpace(n_components=m).fit([e.mesh for e in corpus.train_entries()])
    model.save(out / "model")
    _log(f"shape model: {m} components, retained variance "
         f"{model.retained_variance_fraction():.4f} -> {out}")


@main.command("build-texmodel")
@click.option("--components", type=int, default=None, help="Retained texture components.")
@click.pass_context
@_stage
def build_texmodel(ctx, components):
    """Fit the PCA texture model on the corpus training textures."""
    m = int(_value(ctx, "texture_components", components, 24))
    corpus = _load_corpus(ctx)
    out = _stage_dir(ctx, "texture_model", {"components": m})
    model = TextureSpace(n_components=m).fit([e.texture for e in corpus.train_entries()])
    model.save(out / "model")
    _log(f"texture model: {m} components -> {out}")


@main.command("gen-pairs")
@click.option("--count", type=int, default=None, help="Number of (text, code) pairs.")
@click.option("--seed", type=int, default=None, help="Pair stream seed.")
@click.pass_context
@_stage
def gen_pairs(ctx, count, seed):
    """Write composed (text, code) parser-training pairs as JSON lines."""
    count = int(_value(ctx, "pair_count", count, 50_000))
    seed = int(_value(ctx, "pair_seed", seed, 0))
    out = _stage_dir(ctx, "pairs", {"count": count, "seed": seed})
    schema = default_schema()
    with open(out / "pairs.jsonl", "w", encoding="utf-8") as fh:
        for text, code in gen_training_pairs(schema, n=count, seed=seed):
            fh.write(json.dumps({"text": text, "code": code_to_record(code)}) + "\n")
    _log(f"pairs: {count} -> {out}")


def _read_pairs(path, schema):
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            rec = json.loads(line)
            yield rec["text"], record_to_code(rec["code"], schema)


@main.command("train-parser")
@click.option("--epochs", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.pass_context
@_stage
def train_parser_cmd(ctx, epochs, seed):
    """Train the learned text parser on the generated pairs."""
    epochs = int(_value(ctx, "parser_epochs", epochs, 20))
    seed = int(_value(ctx, "parser_seed", seed, 0))
    pairs_path = ctx.obj["out"] / "pairs" / "pairs.jsonl"
    if not pairs_path.exists():
        raise ValidationError(f"no pairs at {pairs_path}; run gen-pairs first")
    schema = default_schema()
    out = _stage_dir(ctx, "parser", {"epochs": epochs, "seed": seed})
    parser = TextParser(schema=schema, epochs=epochs, seed=seed)
    parser.fit(list(_read_pairs(pairs_path, schema)))
    parser.save(out / "model")
    _log(f"parser: final loss {parser.loss_curve_[-1]:.6f} -> {out}")


@main.command("train-shape")
@click.option("--epochs", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.pass_context
@_stage
def train_shape(ctx, epochs, seed):
    """Train the shape regressor (weighted l1 + regional triplet loss)."""
    epochs = int(_value(ctx, "shape_epochs", epochs, 20))
    seed = int(_value(ctx, "shape_seed", seed, 0))
    corpus = _load_corpus(ctx)
    space = ShapeSpace.load(ctx.obj["out"] / "shape_model" / "model")
    _, masks = canonical_template()
    out = _stage_dir(ctx, "shape_net", {"epochs": epochs, "seed": seed})
    reg = ShapeRegressor(epochs=epochs, seed=seed).fit(corpus, space, masks)
    reg.save(out / "model")
    _log(f"shape net: final loss {reg.training_log_[-1]['total']:.6f} -> {out}")


@main.command("train-texture")
@click.option("--epochs", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.pass_context
@_stage
def train_texture(ctx, epochs, seed):
    """Train the texture regressor (image-space l2)."""
    epochs = int(_value(ctx, "texture_epochs", epochs, 20))
    seed = int(_value(ctx, "texture_seed", seed, 0))
    corpus = _load_corpus(ctx)
    tspace = TextureSpace.load(ctx.obj["out"] / "texture_model" / "model")
    out = _stage_dir(ctx, "texture_net", {"epochs": epochs, "seed": seed})
    reg = TextureRegressor(epochs=epochs, seed=seed).fit(corpus, tspace)
    reg.save(out / "model")
    _log(f"texture net: final loss {reg.training_log_[-1]['l2']:.6f} -> {out}")


# ---------------------------------------------------------------------------
# synthesis / refinement / evaluation
# ---------------------------------------------------------------------------

def _load_models(ctx):
    out = ctx.obj["out"]
    for sub in ("shape_model", "texture_model", "shape_net", "texture_net"):
        if not (out / sub / "model").exists():
            raise ValidationError(f"missing {out / sub}; run the build/train stages first")
    return (
        ShapeSpace.load(out / "shape_model" / "model"),
        TextureSpace.load(out / "texture_model" / "model"),
        ShapeRegressor.load(out / "shape_net" / "model"),
        TextureRegressor.load(out / "texture_net" / "model"),
    )


def _write_previews(out, mesh, texture):
    for view in default_views():
        image = np.clip(render(mesh, texture, view, cull_backfaces=True), 0.0, 1.0)
        save_texture(image, out / f"preview_yaw{int(view.yaw_deg):+04d}.png")


@main.command("synth")
@click.option("--text", required=True, help="Concrete description to synthesize.")
@click.option("--seed", type=int, default=None, help="Noise seed for both regressors.")
@click.option("--parser", "parser_kind", type=click.Choice(["rules", "learned"]),
              default=None, help="Which parser maps text to the code.")
@click.option("--name", default="face", show_default=True, help="Output subdirectory name.")
@click.pass_context
@_stage
def synth(ctx, text, seed, parser_kind, name):
    """Full concrete pipeline: text -> code -> shape + texture -> mesh files."""
    seed = int(_value(ctx, "synth_seed", seed, 0))
    parser_kind = _value(ctx, "parser", parser_kind, "rules")
    schema = default_schema()
    shape_space, tex_space, shape_net, tex_net = _load_models(ctx)
    if parser_kind == "learned":
        parser = TextParser.load(ctx.obj["out"] / "parser" / "model", schema)
        code = parser.predict(text)
    else:
        code = parse_rules(text, schema)
    out = _stage_dir(ctx, "synth", {"text": text, "seed": seed, "parser": parser_kind})
    out = out / name
    out.mkdir(parents=True, exist_ok=True)

    s = predict_shape(shape_net, code, schema, noise_seed=seed)
    mesh = shape_space.synthesize(s)
    t, texture = predict_texture(tex_net, code, schema, tex_space, noise_seed=seed)
    save_mesh(mesh, out / "mesh.obj")
    save_texture(texture, out / "texture.png")
    _write_previews(out, mesh, texture)
    with open(out / "params.json", "w", encoding="utf-8") as fh:
        json.dump({
            "code": code_to_record(code, freeform=text),
            "seed": seed,
            "s": list(s),
            "t": list(t),
        }, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _log(f"synth: '{text}' -> {out}")


@main.command("refine")
@click.option("--prompt", required=True, help="Abstract prompt driving the refinement.")
@click.option("--scorer", "scorer_name", default=None,
              help=f"One of: {', '.join(sorted(builtin_scorers()))}.")
@click.option("--input", "input_dir", default=None,
              help="Synth output directory holding params.json (default out/synth/face).")
@click.option("--iters", type=int, default=None)
@click.option("--name", default="refined", show_default=True)
@click.pass_context
@_stage
def refine_cmd(ctx, prompt, scorer_name, input_dir, iters, name):
    """Optimize (s, t) of a synthesized face against a prompt scorer."""
    scorer_name = _value(ctx, "scorer", scorer_name, "makeup")
    iters = int(_value(ctx, "refine_iters", iters, 200))
    scorers = builtin_scorers()
    if scorer_name not in scorers:
        raise ValidationError(f"unknown scorer {scorer_name!r}; "
                              f"choose from {sorted(scorers)}")
    src = Path(input_dir) if input_dir else ctx.obj["out"] / "synth" / "face"
    params_path = src / "params.json"
    if not params_path.exists():
        raise ValidationError(f"no synthesized face at {src}; run synth first")
    with open(params_path, encoding="utf-8") as fh:
        params = json.load(fh)
    shape_space, tex_space, _, _ = _load_models(ctx)

    out = _stage_dir(ctx, "refine", {"prompt": prompt, "scorer": scorer_name,
                                     "iters": iters, "input": str(src)})
    out = out / name
    out.mkdir(parents=True, exist_ok=True)
    cfg = RefineConfig(iters=iters)
    s, t, trace = abstract_refine(
        np.asarray(params["s"]), np.asarray(params["t"]), prompt,
        scorers[scorer_name], shape_space, tex_space, cfg,
    )
    mesh = shape_space.synthesize(s)
    texture = tex_space.synthesize(t, clamp=True)
    save_mesh(mesh, out / "mesh.obj")
    save_texture(texture, out / "texture.png")
    _write_previews(out, mesh, texture)
    with open(out / "trace.jsonl", "w", encoding="utf-8") as fh:
        for rec in trace:
            fh.write(json.dumps(rec) + "\n")
    with open(out / "params.json", "w", encoding="utf-8") as fh:
        json.dump({"prompt": prompt, "scorer": scorer_name,
                   "s": list(s), "t": list(t)}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _log(f"refine: '{prompt}' loss {trace[-1]['loss']:.6f} -> {out}")


@main.command("eval")
@click.option("--pred", "pred_path", required=True, type=click.Path(exists=True))
@click.option("--gt", "gt_path", required=True, type=click.Path(exists=True))
@click.option("--threshold", type=float, default=None, help="Complete-rate threshold (mm).")
@click.option("--front-only", is_flag=True, default=False)
@click.pass_context
@_stage
def eval_cmd(ctx, pred_path, gt_path, threshold, front_only):
    """Evaluate a predicted mesh against ground truth (CD, CR, identity)."""
    threshold = float(_value(ctx, "cr_threshold", threshold, 10.0))
    pred = load_mesh(pred_path)
    gt = load_mesh(gt_path)
    out = _stage_dir(ctx, "eval", {"pred": str(pred_path), "gt": str(gt_path),
                                   "threshold": threshold, "front_only": front_only})
    result = evaluate(pred, gt, EvalConfig(threshold=threshold, front_only=front_only))
    report = result.as_dict()
    with open(out / "report.json", "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _log(f"eval: cd={report['cd']:.6f}mm cr={report['cr']:.4f} "
         f"id_sim={report['id_sim']:.4f} -> {out}")


@main.command("render")
@click.option("--mesh", "mesh_path", required=True, type=click.Path(exists=True))
@click.option("--texture", "texture_path", required=True, type=click.Path(exists=True))
@click.option("--yaw", type=float, multiple=True, help="Yaw angles (default -30 0 30).")
@click.pass_context
@_stage
def render_cmd(ctx, mesh_path, texture_path, yaw):
    """Render a textured mesh to preview images."""
    mesh = load_mesh(mesh_path)
    texture = load_texture(texture_path)
    yaws = list(yaw) if yaw else list(_value(ctx, "render_yaws", None, [-30.0, 0.0, 30.0]))
    out = _stage_dir(ctx, "render", {"mesh": str(mesh_path),
                                     "texture": str(texture_path), "yaws": yaws})
    for y in yaws:
        view = RenderView(yaw_deg=float(y))
        image = np.clip(render(mesh, texture, view, cull_backfaces=True), 0.0, 1.0)
        save_texture(image, out / f"view_yaw{int(y):+04d}.png")
    _log(f"render: {len(yaws)} views -> {out}")


@main.command("compose")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--attrs", default=None, help="JSON object {attribute: option}.")
@click.pass_context
@_stage
def compose_cmd(ctx, seed, attrs):
    """Compose a description sentence set from an attribute assignment."""
    schema = default_schema()
    record = {"attributes": json.loads(attrs) if attrs else {}}
    code = record_to_code(record, schema)
    click.echo(compose_text(code, seed))


if __name__ == "__main__":
    main()
