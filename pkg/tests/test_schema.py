"""Attribute schema, descriptive codes, and record serialization."""

import numpy as np
import pytest
from hypothesis import given, strategies as st

from textface.errors import SchemaError, ValidationError
from textface.schema import (
    CODE_WIDTH,
    DescriptiveCode,
    code_to_record,
    default_schema,
    merge_code,
    record_to_code,
    split_code,
)

SCHEMA = default_schema()


def random_codes():
    """Hypothesis strategy over valid option-index tuples."""
    return st.tuples(
        *[st.integers(min_value=0, max_value=a.n_options - 1) for a in SCHEMA]
    )


class TestSchemaInvariants:
    def test_exactly_24_attributes(self):
        assert len(SCHEMA) == 24

    def test_option_counts_and_unspecified(self):
        for attr in SCHEMA:
            assert 3 <= attr.n_options <= CODE_WIDTH
            assert attr.options[0] == "unspecified"

    def test_categories_partition_with_all_present(self):
        cats = [a.category for a in SCHEMA]
        assert set(cats) <= {"shape", "color", "general"}
        for c in ("shape", "color", "general"):
            assert c in cats

    def test_antonym_pairs_are_valid_and_distinct(self):
        for attr in SCHEMA:
            for i, j in attr.antonym_map:
                assert i != j
                assert 1 <= i < attr.n_options
                assert 1 <= j < attr.n_options

    def test_antonym_lookup_is_symmetric(self):
        for attr in SCHEMA:
            for i, j in attr.antonym_map:
                assert attr.antonym_of(i) == j
                assert attr.antonym_of(j) == i

    def test_content_hash_is_stable(self):
        assert SCHEMA.content_hash() == default_schema().content_hash()

    def test_shape_and_texture_rows_partition_relevant_attrs(self):
        si = set(SCHEMA.shape_row_indices())
        ti = set(SCHEMA.texture_row_indices())
        assert not (si & ti)
        for i, attr in enumerate(SCHEMA):
            if attr.category == "shape":
                assert i in si
            if attr.category == "color":
                assert i in ti


class TestDescriptiveCode:
    def test_rows_are_one_hot(self):
        code = DescriptiveCode([0] * 24, SCHEMA)
        m = code.matrix()
        assert m.shape == (24, CODE_WIDTH)
        assert np.all(m.sum(axis=1) == 1.0)

    def test_out_of_range_option_rejected(self):
        idx = [0] * 24
        idx[0] = SCHEMA[0].n_options
        with pytest.raises(ValidationError):
            DescriptiveCode(idx, SCHEMA)

    @given(random_codes())
    def test_matrix_round_trip(self, idx):
        code = DescriptiveCode(list(idx), SCHEMA)
        assert DescriptiveCode.from_matrix(code.matrix(), SCHEMA) == code

    @given(random_codes())
    def test_split_merge_identity(self, idx):
        code = DescriptiveCode(list(idx), SCHEMA)
        shape_rows, tex_rows = split_code(code, SCHEMA)
        merged = merge_code(shape_rows, tex_rows, SCHEMA)
        # rows outside both submatrices come back unspecified; the rest match
        si = set(SCHEMA.shape_row_indices())
        ti = set(SCHEMA.texture_row_indices())
        for i in range(24):
            expect = idx[i] if i in si | ti else 0
            assert merged.option_indices[i] == expect


class TestRecords:
    @given(random_codes())
    def test_record_round_trip(self, idx):
        code = DescriptiveCode(list(idx), SCHEMA)
        rec = code_to_record(code, record_id="x")
        assert record_to_code(rec, SCHEMA) == code

    def test_unspecified_rows_omitted_from_record(self):
        code = DescriptiveCode([0] * 24, SCHEMA)
        assert code_to_record(code)["attributes"] == {}

    def test_unknown_option_rejected(self):
        rec = {"attributes": {"nose_size": "gigantic"}}
        with pytest.raises(SchemaError):
            record_to_code(rec, SCHEMA)

    def test_unknown_attribute_rejected(self):
        rec = {"attributes": {"tentacles": "many"}}
        with pytest.raises(SchemaError):
            record_to_code(rec, SCHEMA)

    def test_missing_attributes_default_to_unspecified(self):
        rec = {"attributes": {"nose_size": "large"}}
        code = record_to_code(rec, SCHEMA)
        i = SCHEMA.index_of("nose_size")
        assert code.option_name(i) == "large"
        assert sum(1 for x in code.option_indices if x != 0) == 1
