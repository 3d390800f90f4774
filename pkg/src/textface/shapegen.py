"""Shape regressor: descriptive code + noise -> shape-space parameters.

Trained with a region-weighted l1 vertex loss (landmark/feature/face/back
weights 16:4:3:0) plus a region-specific triplet hinge against antonym
negatives.  Both losses are normalized per vertex (and per coordinate for the
triplet term) so the weights are resolution independent.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .errors import TrainingDivergedError, ValidationError
from .nnet import MlpNet
from .schema import split_code
from .template import (
    FEAT_EYES,
    FEAT_MOUTH,
    FEAT_NOSE,
    FEAT_OTHER,
    REGION_BACK_HEAD,
    REGION_FACE_OTHER,
    REGION_FEATURE,
    REGION_LANDMARK,
)

DEFAULT_REGION_WEIGHTS = {
    REGION_LANDMARK: 16.0,
    REGION_FEATURE: 4.0,
    REGION_FACE_OTHER: 3.0,
    REGION_BACK_HEAD: 0.0,
}

RST_REGIONS = (FEAT_EYES, FEAT_NOSE, FEAT_MOUTH, FEAT_OTHER)

# which attributes a triplet negative may flip, per facial region
REGION_ATTRIBUTES = {
    FEAT_EYES: ("eye_size", "eye_shape", "eye_spacing", "eyebrow_thickness", "eyebrow_shape"),
    FEAT_NOSE: ("nose_size", "nose_width"),
    FEAT_MOUTH: ("mouth_width", "lip_thickness"),
    FEAT_OTHER: ("face_shape", "jaw_width", "chin_shape", "cheek_fullness",
                 "forehead_height", "gender", "age_band", "overall_build"),
}


def vertex_weights(masks, weights=None):
    """Per-vertex weight vector from the region labeling."""
    weights = dict(DEFAULT_REGION_WEIGHTS if weights is None else weights)
    labels = masks.region_of_vertex
    out = np.empty(len(labels))
    known = set(weights)
    for label in np.unique(labels):
        if label not in known:
            raise ValidationError(f"unknown region label {label!r}")
        out[labels == label] = weights[label]
    return out


def weighted_l1(pred_vertices, gt_vertices, masks, weights=None):
    """Region-weighted l1 vertex loss, normalized by vertex count.

    Returns (loss, gradient w.r.t. pred).  Supports a leading batch axis.
    """
    pred = np.asarray(pred_vertices, dtype=np.float64)
    gt = np.asarray(gt_vertices, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValidationError("pred/gt vertex arrays must share a shape")
    w = vertex_weights(masks, weights)
    n = w.size
    if pred.shape[-2] != n:
        raise ValidationError("vertex count does not match the region masks")
    diff = pred - gt
    batched = diff.ndim == 3
    scale = w[:, None] / n
    if batched:
        per_item = np.sum(np.abs(diff) * scale, axis=(1, 2))
        loss = float(per_item.mean())
        grad = np.sign(diff) * scale / diff.shape[0]
    else:
        loss = float(np.sum(np.abs(diff) * scale))
        grad = np.sign(diff) * scale
    return loss, grad


def rst_region_masks(masks):
    """Boolean vertex masks for the four triplet regions (face side only)."""
    feat = masks.feature_region_of_vertex
    front = masks.region_of_vertex != REGION_BACK_HEAD
    return {
        FEAT_EYES: feat == FEAT_EYES,
        FEAT_NOSE: feat == FEAT_NOSE,
        FEAT_MOUTH: feat == FEAT_MOUTH,
        FEAT_OTHER: (feat == FEAT_OTHER) & front,
    }


def region_l1(a, b, region_mask):
    """Mean-per-vertex-coordinate l1 distance restricted to a region."""
    sel = np.abs(np.asarray(a)[region_mask] - np.asarray(b)[region_mask])
    return float(sel.mean())


def rst_loss(pred, gt_pos, gt_neg, region_mask, margin, weight):
    """Region-specific triplet hinge; returns (loss, gradient w.r.t. pred).

    loss = max(d(pred, pos) - d(pred, neg) + margin, 0) * weight with d the
    mean region l1; the gradient is zero on the satisfied branch.
    """
    region_mask = np.asarray(region_mask, dtype=bool)
    if not region_mask.any():
        raise ValidationError("empty triplet region")
    pred = np.asarray(pred, dtype=np.float64)
    d_pos = region_l1(pred, gt_pos, region_mask)
    d_neg = region_l1(pred, gt_neg, region_mask)
    raw = d_pos - d_neg + margin
    grad = np.zeros_like(pred)
    if raw <= 0.0:
        return 0.0, grad
    denom = region_mask.sum() * 3.0
    g = (np.sign(pred - gt_pos) - np.sign(pred - gt_neg)) * (weight / denom)
    grad[region_mask] = g[region_mask]
    return raw * weight, grad


def _hamming(a, b, skip):
    return sum(1 for i, (x, y) in enumerate(zip(a, b)) if i != skip and x != y)


def _antonym_negative(entries, item_idx, attr_idx, schema):
    """Training index whose code flips attr to its antonym, nearest otherwise."""
    code = entries[item_idx].code.option_indices
    attr = schema[attr_idx]
    target = attr.antonym_of(code[attr_idx])
    if target is None:
        return None
    best, best_d = None, None
    for j, e in enumerate(entries):
        if j == item_idx or e.code.option_indices[attr_idx] != target:
            continue
        d = _hamming(code, e.code.option_indices, attr_idx)
        if best_d is None or d < best_d:
            best, best_d = j, d
    return best


def calibrate_rst(corpus, schema, masks, spread_pairs=200, seed=0):
    """Per-region triplet margin and weight from the corpus geometry.

    Margin = mean region l1 gap over antonym-paired samples; weight = inverse
    of the mean region l1 spread between random sample pairs, so the four
    region losses are comparably scaled.
    """
    entries = corpus.train_entries()
    region_masks = rst_region_masks(masks)
    rng = np.random.default_rng(seed)
    margins, weights = {}, {}
    for region, mask in region_masks.items():
        gaps = []
        for i, e in enumerate(entries):
            for attr_name in REGION_ATTRIBUTES[region]:
                ai = schema.index_of(attr_name)
                j = _antonym_negative(entries, i, ai, schema)
                if j is not None:
                    gaps.append(region_l1(e.mesh.vertices, entries[j].mesh.vertices, mask))
                    break  # one pair per sample keeps calibration O(n^2) bounded
        margins[region] = float(np.mean(gaps)) if gaps else 0.0
        spreads = []
        for _ in range(spread_pairs):
            i, j = rng.integers(0, len(entries), size=2)
            if i != j:
                spreads.append(
                    region_l1(entries[i].mesh.vertices, entries[j].mesh.vertices, mask)
                )
        mean_spread = float(np.mean(spreads)) if spreads else 0.0
        weights[region] = 1.0 / mean_spread if mean_spread > 1e-12 else 1.0
    return margins, weights


class ShapeRegressor(BaseEstimator):
    """MLP from flattened shape code + Gaussian noise to shape parameters."""

    def __init__(self, noise_dim=512, hidden_width=256, n_hidden=6, lr=0.001,
                 epochs=20, batch_size=128, rst_weight=0.1, passes_per_epoch=16,
                 region_weights=None, seed=0):
        self.noise_dim = noise_dim
        self.hidden_width = hidden_width
        self.n_hidden = n_hidden
        self.lr = lr
        self.epochs = epochs
        self.batch_size = batch_size
        self.rst_weight = rst_weight
        self.passes_per_epoch = passes_per_epoch
        self.region_weights = region_weights
        self.seed = seed

    def fit(self, corpus, shape_space, masks):
        schema = corpus.schema
        entries = corpus.train_entries()
        if not entries:
            raise ValidationError("corpus has no training entries")
        codes = np.stack(
            [split_code(e.code, schema)[0].reshape(-1) for e in entries]
        )
        gt = np.stack([e.mesh.vertices for e in entries])
        n_train, n_vertices = len(entries), gt.shape[1]
        m = shape_space.n_components
        jac = shape_space.vertex_jacobian_diag()  # (3N, m)
        mean_flat = shape_space.mean_

        margins, lambdas = calibrate_rst(corpus, schema, masks, seed=self.seed)
        self.rst_margins_ = margins
        self.rst_lambdas_ = lambdas
        region_masks = rst_region_masks(masks)

        dims = [codes.shape[1] + self.noise_dim] + [self.hidden_width] * self.n_hidden + [m]
        net = MlpNet.create(dims, seed=self.seed)
        rng = np.random.default_rng(self.seed + 1)

        # negatives are precomputed per (sample, region)
        neg_table = {}
        for region in RST_REGIONS:
            for i in range(n_train):
                for attr_name in REGION_ATTRIBUTES[region]:
                    ai = schema.index_of(attr_name)
                    j = _antonym_negative(entries, i, ai, schema)
                    if j is not None:
                        neg_table[(region, i)] = j
                        break

        w_l1 = vertex_weights(masks, self.region_weights)
        log = []
        step = 0
        for epoch in range(1, self.epochs + 1):
            lr = self.lr * (0.5 if epoch > 10 else 1.0)
            epoch_l1, epoch_rst = [], []
            for _ in range(self.passes_per_epoch):
                order = rng.permutation(n_train)
                for start in range(0, n_train, self.batch_size):
                    batch = order[start:start + self.batch_size]
                    b = len(batch)
                    noise = rng.standard_normal((b, self.noise_dim))
                    x = np.concatenate([codes[batch], noise], axis=1)
                    s, cache = net.forward(x)
                    v_flat = mean_flat + s @ jac.T
                    v = v_flat.reshape(b, n_vertices, 3)

                    l1_loss, dv = weighted_l1(v, gt[batch], masks, self.region_weights)
                    rst_total = 0.0
                    if self.rst_weight > 0.0:
                        for bi, ti in enumerate(batch):
                            region = RST_REGIONS[int(rng.integers(0, len(RST_REGIONS)))]
                            j = neg_table.get((region, int(ti)))
                            if j is None:
                                continue
                            loss_r, grad_r = rst_loss(
                                v[bi], gt[ti], gt[j], region_masks[region],
                                margins[region], lambdas[region],
                            )
                            rst_total += loss_r / b
                            dv[bi] += self.rst_weight * grad_r / b
                    total = l1_loss + self.rst_weight * rst_total
                    if not np.isfinite(total):
                        raise TrainingDivergedError(
                            f"non-finite loss at step {step}", epoch=epoch, step=step
                        )
                    ds = dv.reshape(b, -1) @ jac
                    grads, _ = net.backward(cache, ds)
                    net.adam_step(grads, lr)
                    epoch_l1.append(l1_loss)
                    epoch_rst.append(rst_total)
                    step += 1
            log.append(
                {
                    "epoch": epoch,
                    "step": step,
                    "l1": float(np.mean(epoch_l1)),
                    "rst": float(np.mean(epoch_rst)),
                    "total": float(np.mean(epoch_l1) + self.rst_weight * np.mean(epoch_rst)),
                }
            )
        self.net_ = net
        self.training_log_ = log
        self.code_dim_ = codes.shape[1]
        return self

    def predict(self, shape_code_rows, noise_seed=0):
        """Shape parameters for one flattened shape-code submatrix.

        ``noise_seed=None`` uses zero noise (the deterministic center).
        """
        flat = np.asarray(shape_code_rows, dtype=np.float64).reshape(-1)
        if flat.size != self.code_dim_:
            raise ValidationError(
                f"expected shape code of length {self.code_dim_}, got {flat.size}"
            )
        if noise_seed is None:
            noise = np.zeros(self.noise_dim)
        else:
            noise = np.random.default_rng(noise_seed).standard_normal(self.noise_dim)
        x = np.concatenate([flat, noise])
        return self.net_.predict(x)[0]

    def save(self, path):
        self.net_.save(path, extra_meta={
            "kind": "shape_regressor",
            "code_dim": self.code_dim_,
            "noise_dim": self.noise_dim,
            "rst_margins": self.rst_margins_,
            "rst_lambdas": self.rst_lambdas_,
            "training_log": self.training_log_,
        })

    @classmethod
    def load(cls, path):
        net, meta = MlpNet.load(path)
        model = cls(noise_dim=int(meta["noise_dim"]))
        model.net_ = net
        model.code_dim_ = int(meta["code_dim"])
        model.rst_margins_ = meta.get("rst_margins", {})
        model.rst_lambdas_ = meta.get("rst_lambdas", {})
        model.training_log_ = meta.get("training_log", [])
        return model


def predict_shape(regressor, code, schema, noise_seed=0):
    """Convenience: full DescriptiveCode -> shape parameters."""
    shape_rows, _ = split_code(code, schema)
    return regressor.predict(shape_rows, noise_seed)
