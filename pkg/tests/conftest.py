"""Shared fixtures and the acceptance-summary reporter.

Expensive artifacts (corpora, trained models) are session-scoped so the
acceptance suite and unit tests share them.
"""

import re

import pytest

from textface.corpus import generate_corpus
from textface.morphable import ShapeSpace, TextureSpace
from textface.schema import default_schema
from textface.shapegen import ShapeRegressor
from textface.template import canonical_template
from textface.texgen import TextureRegressor


@pytest.fixture(scope="session")
def schema():
    return default_schema()


@pytest.fixture(scope="session")
def template_and_masks():
    return canonical_template()


@pytest.fixture(scope="session")
def masks(template_and_masks):
    return template_and_masks[1]


@pytest.fixture(scope="session")
def small_corpus(schema):
    """48 identities at low texture resolution: cheap unit-test data."""
    return generate_corpus(schema, count=48, master_seed=0, resolution=64)


@pytest.fixture(scope="session")
def full_corpus(schema):
    """The 256-identity corpus the acceptance criteria run against."""
    return generate_corpus(schema, count=256, master_seed=0, resolution=64)


@pytest.fixture(scope="session")
def small_shape_space(small_corpus):
    # the generator's displacement fields span ~17 directions, so 16
    # components keep every retained singular value well away from zero
    return ShapeSpace(n_components=16).fit(
        [e.mesh for e in small_corpus.train_entries()]
    )


@pytest.fixture(scope="session")
def small_texture_space(small_corpus):
    return TextureSpace(n_components=16).fit(
        [e.texture for e in small_corpus.train_entries()]
    )


@pytest.fixture(scope="session")
def full_shape_space(full_corpus):
    return ShapeSpace(n_components=32).fit(
        [e.mesh for e in full_corpus.train_entries()]
    )


@pytest.fixture(scope="session")
def full_texture_space(full_corpus):
    return TextureSpace(n_components=24).fit(
        [e.texture for e in full_corpus.train_entries()]
    )


@pytest.fixture(scope="session")
def trained_shape_regressor(full_corpus, full_shape_space, masks):
    """Full 20-epoch training run on the 256-identity corpus."""
    return ShapeRegressor(seed=0).fit(full_corpus, full_shape_space, masks)


@pytest.fixture(scope="session")
def trained_texture_regressor(full_corpus, full_texture_space):
    return TextureRegressor(seed=0).fit(full_corpus, full_texture_space)


# ---------------------------------------------------------------------------
# acceptance summary: one pass/fail line per criterion at the end of the run
# ---------------------------------------------------------------------------

_CRITERION_RE = re.compile(r"test_acceptance\.py::test_criterion_(\d+)_(\w+)")
_criterion_outcomes = {}


def pytest_runtest_logreport(report):
    match = _CRITERION_RE.search(report.nodeid)
    if not match:
        return
    num, name = int(match.group(1)), match.group(2)
    if report.failed:
        _criterion_outcomes[(num, name)] = "FAIL"
    elif report.when == "call" and report.passed:
        _criterion_outcomes.setdefault((num, name), "PASS")
    elif report.skipped:
        _criterion_outcomes.setdefault((num, name), "SKIP")


def pytest_terminal_summary(terminalreporter):
    if not _criterion_outcomes:
        return
    terminalreporter.write_line("")
    terminalreporter.write_line("acceptance criteria:")
    for (num, name), outcome in sorted(_criterion_outcomes.items()):
        terminalreporter.write_line(
            f"  criterion {num} ({name.replace('_', ' ')}): {outcome}"
        )
