"""Text <-> descriptive-code mapping.

Four pieces: the sentence-template composer, a rule-based parser that is exact
on composed text (the oracle), a deterministic signed-hash text embedder, and
a learned parser trained with row-wise cross-entropy on composed pairs.
"""

from __future__ import annotations

import re
import zlib
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .errors import AmbiguityError, TrainingDivergedError, ValidationError
from .nnet import MlpNet, rowwise_cross_entropy
from .schema import CODE_WIDTH, AttributeSchema, DescriptiveCode

EMBED_DIM = 512

# attributes whose sentences describe the person, not a feature noun phrase
_PERSONAL = {"age_band", "race", "makeup", "overall_build"}

_TOKEN_RE = re.compile(r"[A-Za-z]+(?:-[A-Za-z]+)*")


@dataclass(frozen=True)
class TemplateSet:
    """Two sentence patterns per attribute plus gender-keyed pronoun rules.

    Pattern slots: {pos} possessive pronoun, {subj} subject pronoun,
    {phrase} attribute noun phrase, {verb} is/are, {option} option label.
    """

    feature_patterns: tuple = (
        "{pos} {phrase} {verb} {option}.",
        "{subj} has {option} {phrase}.",
    )
    personal_patterns: tuple = (
        "{subj} is {option}.",
        "{subj} looks {option}.",
    )
    gender_patterns: tuple = (
        "The person is {option}.",
        "This face is {option}.",
    )
    pronouns: tuple = (("Their", "They"), ("His", "He"), ("Her", "She"))

    def patterns_for(self, attr):
        if attr.name == "gender":
            return self.gender_patterns
        if attr.name in _PERSONAL:
            return self.personal_patterns
        return self.feature_patterns

    def render(self, attr, option, gender_idx, pattern_idx):
        pos, subj = self.pronouns[gender_idx]
        pattern = self.patterns_for(attr)[pattern_idx]
        return pattern.format(
            pos=pos,
            subj=subj,
            phrase=attr.phrase,
            verb="are" if attr.plural else "is",
            option=option,
        )


DEFAULT_TEMPLATES = TemplateSet()


def compose_text(code: DescriptiveCode, seed, templates=DEFAULT_TEMPLATES):
    """One sentence per specified attribute; pattern and order drawn from seed."""
    rng = np.random.default_rng(seed)
    schema = code.schema
    gender_idx = code.option_indices[schema.index_of("gender")]
    sentences = []
    for i, attr in enumerate(schema):
        opt = code.option_indices[i]
        if opt == 0:
            continue
        pattern_idx = int(rng.integers(0, len(templates.patterns_for(attr))))
        sentences.append(templates.render(attr, attr.options[opt], gender_idx, pattern_idx))
    rng.shuffle(sentences)
    return " ".join(sentences)


def _option_lexicon(schema: AttributeSchema):
    lex = {}
    for i, attr in enumerate(schema):
        for j, opt in enumerate(attr.options):
            if j == 0:
                continue
            key = opt.lower()
            if key in lex:
                raise ValidationError(f"option token {opt!r} is not unique in schema")
            lex[key] = (i, j)
    return lex


def parse_rules(text, schema: AttributeSchema, templates=DEFAULT_TEMPLATES):
    """Rule-based parse: exact on composed text, unmatched rows unspecified."""
    lex = _option_lexicon(schema)
    found = {}
    for token in _TOKEN_RE.findall(text):
        hit = lex.get(token.lower())
        if hit is None:
            continue
        i, j = hit
        if i in found and found[i][0] != j:
            raise AmbiguityError(schema[i].name, [found[i][1], token])
        found[i] = (j, token)
    idx = [found.get(i, (0, None))[0] for i in range(len(schema))]
    return DescriptiveCode(idx, schema)


# ---------------------------------------------------------------------------
# deterministic signed-hash embedding (fixed 512-dim text code)
# ---------------------------------------------------------------------------

_M1 = np.uint64(0xFF51AFD7ED558CCD)
_M2 = np.uint64(0xC4CEB9FE1A85EC53)


def _mix64(x):
    x = x.astype(np.uint64)
    x ^= x >> np.uint64(33)
    x *= _M1
    x ^= x >> np.uint64(33)
    x *= _M2
    x ^= x >> np.uint64(33)
    return x


def embed_text(text):
    """Char 3-gram + word-unigram counts, signed-hashed into 512 bins, l2-normed."""
    vec = np.zeros(EMBED_DIM)
    data = text.lower().encode("utf-8", errors="replace")
    if len(data) >= 3:
        b = np.frombuffer(data, dtype=np.uint8).astype(np.uint64)
        grams = (b[:-2] << np.uint64(16)) | (b[1:-1] << np.uint64(8)) | b[2:]
        with np.errstate(over="ignore"):
            h = _mix64(grams)
        bins = (h % np.uint64(EMBED_DIM)).astype(np.int64)
        signs = np.where((h >> np.uint64(10)) & np.uint64(1), 1.0, -1.0)
        np.add.at(vec, bins, signs)
    for word in _TOKEN_RE.findall(text.lower()):
        h = zlib.crc32(word.encode())
        sign = 1.0 if zlib.crc32(b"s:" + word.encode()) & 1 else -1.0
        vec[h % EMBED_DIM] += sign
    norm = np.linalg.norm(vec)
    if norm == 0.0:
        vec[0] = 1.0
        return vec
    return vec / norm


def embed_many(texts):
    return np.stack([embed_text(t) for t in texts])


# ---------------------------------------------------------------------------
# training pairs and the learned parser
# ---------------------------------------------------------------------------

DEFAULT_PAIR_COUNT = 50_000


def gen_training_pairs(schema: AttributeSchema, n=DEFAULT_PAIR_COUNT, seed=0,
                       templates=DEFAULT_TEMPLATES):
    """Deterministic stream of (text, code): 3..24 attributes specified each."""
    if n < 1:
        raise ValidationError("need n >= 1 pairs")
    rng = np.random.default_rng(seed)
    n_attrs = len(schema)
    for _ in range(n):
        k = int(rng.integers(3, n_attrs + 1))
        chosen = rng.choice(n_attrs, size=k, replace=False)
        idx = [0] * n_attrs
        for i in chosen:
            idx[i] = int(rng.integers(1, schema[i].n_options))
        code = DescriptiveCode(idx, schema)
        text = compose_text(code, int(rng.integers(0, 2 ** 63 - 1)), templates)
        yield text, code


class TextParser(BaseEstimator):
    """Learned text parser: hash embedding -> MLP -> 24 x 8 option logits."""

    def __init__(self, schema=None, hidden_width=256, n_hidden=6, lr=0.001,
                 epochs=20, batch_size=128, seed=0):
        self.schema = schema
        self.hidden_width = hidden_width
        self.n_hidden = n_hidden
        self.lr = lr
        self.epochs = epochs
        self.batch_size = batch_size
        self.seed = seed

    def _check_schema(self):
        if self.schema is None:
            raise ValidationError("TextParser needs a schema")
        return self.schema

    def fit(self, pairs, embeddings=None):
        """Train on (text, code) pairs; lr halves after epoch 10.

        ``embeddings`` may carry precomputed embed_text vectors for the texts.
        """
        schema = self._check_schema()
        pairs = list(pairs)
        if not pairs:
            raise ValidationError("no training pairs")
        x = embed_many([t for t, _ in pairs]) if embeddings is None else np.asarray(embeddings)
        y = np.stack([c.matrix() for _, c in pairs])
        n_rows = len(schema)

        dims = [EMBED_DIM] + [self.hidden_width] * self.n_hidden + [n_rows * CODE_WIDTH]
        net = MlpNet.create(dims, seed=self.seed)
        rng = np.random.default_rng(self.seed + 1)
        curve = []
        for epoch in range(1, self.epochs + 1):
            lr = self.lr * (0.5 if epoch > 10 else 1.0)
            order = rng.permutation(len(pairs))
            losses = []
            for start in range(0, len(pairs), self.batch_size):
                batch = order[start:start + self.batch_size]
                logits, cache = net.forward(x[batch])
                logits = logits.reshape(len(batch), n_rows, CODE_WIDTH)
                loss, dlogits = rowwise_cross_entropy(logits, y[batch])
                if not np.isfinite(loss):
                    raise TrainingDivergedError(
                        f"non-finite loss at epoch {epoch}", epoch=epoch
                    )
                grads, _ = net.backward(cache, dlogits.reshape(len(batch), -1))
                net.adam_step(grads, lr)
                losses.append(loss)
            curve.append(float(np.mean(losses)))
        self.net_ = net
        self.loss_curve_ = curve
        return self

    def decision_function(self, texts):
        logits = self.net_.predict(embed_many(texts))
        return logits.reshape(len(texts), len(self.schema), CODE_WIDTH)

    def predict(self, text):
        """Row-wise argmax of the logits as a DescriptiveCode."""
        schema = self._check_schema()
        if self.net_.out_dim != len(schema) * CODE_WIDTH:
            raise ValidationError("model output arity does not match the schema")
        logits = self.decision_function([text])[0]
        idx = []
        for i, attr in enumerate(schema):
            row = logits[i].copy()
            row[attr.n_options:] = -np.inf  # padding columns are never options
            idx.append(int(np.argmax(row)))
        return DescriptiveCode(idx, schema)

    def per_attribute_accuracy(self, pairs):
        """Mean over attributes of option accuracy against the paired codes."""
        pairs = list(pairs)
        logits = self.decision_function([t for t, _ in pairs])
        pred = logits.argmax(axis=2)
        truth = np.array([c.option_indices for _, c in pairs])
        return float((pred == truth).mean())

    def save(self, path):
        self.net_.save(path, extra_meta={
            "kind": "text_parser",
            "schema_hash": self.schema.content_hash(),
            "loss_curve": self.loss_curve_,
        })

    @classmethod
    def load(cls, path, schema):
        net, meta = MlpNet.load(path)
        if meta.get("schema_hash") != schema.content_hash():
            raise ValidationError("parser model was trained for a different schema")
        parser = cls(schema=schema)
        parser.net_ = net
        parser.loss_curve_ = meta.get("loss_curve", [])
        return parser


def train_parser(pairs, schema, **kwargs):
    """Functional wrapper around TextParser.fit."""
    return TextParser(schema=schema, **kwargs).fit(pairs)
