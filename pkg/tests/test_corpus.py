"""Synthetic corpus generator: determinism, monotone measurements, IO."""

import numpy as np
import pytest

from textface.corpus import (
    MEASUREMENTS,
    IdentityParams,
    generate_corpus,
    generate_identity,
    lip_redness,
    load_corpus,
    measure,
    paint_texture,
    save_corpus,
    skin_luminance,
)
from textface.errors import ValidationError
from textface.schema import DescriptiveCode
from textface.template import canonical_template


def _code_with(schema, **options):
    idx = [0] * len(schema)
    for name, opt in options.items():
        i = schema.index_of(name)
        idx[i] = schema[i].options.index(opt)
    return DescriptiveCode(idx, schema)


def _rank_code(schema, attr_name, rank):
    idx = [0] * len(schema)
    idx[schema.index_of(attr_name)] = rank
    return DescriptiveCode(idx, schema)


class TestDeterminism:
    def test_identity_generation_is_deterministic(self, schema):
        params = IdentityParams.random(schema, 1234)
        m1, t1, c1 = generate_identity(schema, params, resolution=32)
        m2, t2, c2 = generate_identity(schema, params, resolution=32)
        assert np.array_equal(m1.vertices, m2.vertices)
        assert np.array_equal(t1, t2)
        assert c1 == c2

    def test_corpus_regeneration_matches(self, schema, small_corpus):
        again = generate_corpus(schema, count=48, master_seed=0, resolution=64)
        assert again.train_ids == small_corpus.train_ids
        assert again.test_ids == small_corpus.test_ids
        for a, b in zip(again.entries, small_corpus.entries):
            assert np.array_equal(a.mesh.vertices, b.mesh.vertices)
            assert np.array_equal(a.texture, b.texture)

    def test_different_seeds_differ(self, schema):
        a = generate_corpus(schema, count=4, master_seed=0, resolution=32)
        b = generate_corpus(schema, count=4, master_seed=1, resolution=32)
        assert not np.array_equal(a.entries[0].mesh.vertices, b.entries[0].mesh.vertices)


class TestSplit:
    def test_80_20_split(self, small_corpus):
        assert len(small_corpus.train_ids) == 38  # floor(48 * 0.8)
        assert len(small_corpus.test_ids) == 10
        assert not set(small_corpus.train_ids) & set(small_corpus.test_ids)
        all_ids = {e.entry_id for e in small_corpus.entries}
        assert set(small_corpus.train_ids) | set(small_corpus.test_ids) == all_ids

    def test_too_small_corpus_rejected(self, schema):
        with pytest.raises(ValidationError):
            generate_corpus(schema, count=1)


class TestShapeMonotonicity:
    @pytest.mark.parametrize("attr_name", sorted(MEASUREMENTS))
    def test_measurement_monotone_in_option_rank(self, schema, attr_name):
        _, masks = canonical_template()
        attr = schema[schema.index_of(attr_name)]
        jitter = [0.0] * len(schema)
        values = []
        for rank in range(1, attr.n_options):
            code = _rank_code(schema, attr_name, rank)
            params = IdentityParams(0, tuple(code.option_indices), tuple(jitter))
            mesh, _, _ = generate_identity(schema, params, resolution=16)
            values.append(measure(attr_name, mesh, masks))
        diffs = np.diff(values)
        assert np.all(diffs > 0) or np.all(diffs < 0), (attr_name, values)

    def test_unspecified_attributes_leave_template_unchanged(self, schema):
        mesh, _ = canonical_template()
        code = DescriptiveCode([0] * len(schema), schema)
        params = IdentityParams(0, tuple(code.option_indices), tuple([0.0] * 24))
        out, _, _ = generate_identity(schema, params, resolution=16)
        assert np.allclose(out.vertices, mesh.vertices)


class TestTexture:
    def test_skin_luminance_monotone_in_tone(self, schema):
        jitter = [0.0] * len(schema)
        lums = [
            skin_luminance(paint_texture(
                _code_with(schema, skin_tone=schema[schema.index_of("skin_tone")].options[r]),
                jitter, resolution=64))
            for r in range(1, schema[schema.index_of("skin_tone")].n_options)
        ]
        assert np.all(np.diff(lums) < 0)  # darker tones = lower luminance

    def test_lip_redness_monotone_in_lip_color(self, schema):
        jitter = [0.0] * len(schema)
        attr = schema[schema.index_of("lip_color")]
        reds = [
            lip_redness(paint_texture(_rank_code(schema, "lip_color", r), jitter, 64))
            for r in range(1, attr.n_options)
        ]
        assert np.all(np.diff(reds) > 0)

    def test_texture_values_in_unit_interval(self, small_corpus):
        tex = small_corpus.entries[0].texture
        assert tex.min() >= 0.0 and tex.max() <= 1.0


class TestCorpusIO:
    def test_save_load_round_trip(self, schema, tmp_path):
        corpus = generate_corpus(schema, count=3, master_seed=7, resolution=32)
        save_corpus(corpus, tmp_path / "c")
        loaded = load_corpus(tmp_path / "c", schema)
        assert loaded.train_ids == corpus.train_ids
        assert loaded.test_ids == corpus.test_ids
        for a, b in zip(loaded.entries, corpus.entries):
            assert a.code == b.code
            assert np.allclose(a.mesh.vertices, b.mesh.vertices, atol=1e-6)
            assert np.allclose(a.texture, b.texture, atol=1.0 / 255.0)

    def test_save_is_byte_deterministic(self, schema, tmp_path):
        corpus = generate_corpus(schema, count=2, master_seed=7, resolution=32)
        save_corpus(corpus, tmp_path / "a")
        save_corpus(corpus, tmp_path / "b")
        for rel in ("manifest.json", "id_0000/mesh.obj", "id_0000/tex.png",
                    "id_0000/annotation.json"):
            assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()

    def test_schema_mismatch_rejected(self, schema, tmp_path, monkeypatch):
        corpus = generate_corpus(schema, count=2, master_seed=0, resolution=32)
        save_corpus(corpus, tmp_path / "c")
        manifest = tmp_path / "c" / "manifest.json"
        manifest.write_text(manifest.read_text().replace(
            corpus.schema.content_hash(), "0" * len(corpus.schema.content_hash())))
        with pytest.raises(ValidationError):
            load_corpus(tmp_path / "c", schema)
