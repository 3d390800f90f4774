"""Minimal dense-network kernel: forward, backward, Adam, gradient checking.

Everything is float64.  The ReLU subgradient at 0 is taken as 0, as is the
l1 subgradient, so training is deterministic.
"""

from __future__ import annotations

import numpy as np

from . import archive
from .errors import TrainingDivergedError, ValidationError

RELU = "relu"
IDENTITY = "identity"


class MlpNet:
    """A stack of dense layers with per-layer activation and Adam state."""

    def __init__(self, weights, biases, activations):
        if not (len(weights) == len(biases) == len(activations)):
            raise ValidationError("layer lists must have equal length")
        for k in range(len(weights) - 1):
            if weights[k].shape[0] != weights[k + 1].shape[1]:
                raise ValidationError(f"layer {k}->{k + 1} dimensions do not chain")
        for act in activations:
            if act not in (RELU, IDENTITY):
                raise ValidationError(f"unknown activation {act!r}")
        self.weights = [np.asarray(w, dtype=np.float64) for w in weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in biases]
        self.activations = list(activations)
        self.reset_adam()

    @classmethod
    def create(cls, dims, seed, final_activation=IDENTITY):
        """Seeded uniform(+-sqrt(6/(fan_in+fan_out))) init; ReLU hidden layers."""
        rng = np.random.default_rng(seed)
        weights, biases, acts = [], [], []
        for k in range(len(dims) - 1):
            fan_in, fan_out = dims[k], dims[k + 1]
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
            biases.append(np.zeros(fan_out))
            acts.append(RELU if k < len(dims) - 2 else final_activation)
        return cls(weights, biases, acts)

    @property
    def n_layers(self):
        return len(self.weights)

    @property
    def in_dim(self):
        return self.weights[0].shape[1]

    @property
    def out_dim(self):
        return self.weights[-1].shape[0]

    def reset_adam(self):
        self._adam_m = [np.zeros_like(w) for w in self.weights] + [
            np.zeros_like(b) for b in self.biases
        ]
        self._adam_v = [np.zeros_like(g) for g in self._adam_m]
        self.adam_step_count = 0

    # ---- forward / backward -------------------------------------------------

    def forward(self, x):
        """Batched forward pass; returns (output, cache for backward)."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        inputs = [x]
        for w, b, act in zip(self.weights, self.biases, self.activations):
            z = x @ w.T + b
            x = np.maximum(z, 0.0) if act == RELU else z
            inputs.append(x)
        return inputs[-1], inputs

    def predict(self, x):
        return self.forward(x)[0]

    def backward(self, cache, upstream_grad):
        """Gradients for a cached forward pass.

        Returns (grads, input_grad) with grads a list of (dW, db) per layer.
        """
        delta = np.atleast_2d(np.asarray(upstream_grad, dtype=np.float64))
        grads = [None] * self.n_layers
        for k in range(self.n_layers - 1, -1, -1):
            if self.activations[k] == RELU:
                delta = delta * (cache[k + 1] > 0.0)
            dw = delta.T @ cache[k]
            db = delta.sum(axis=0)
            grads[k] = (dw, db)
            delta = delta @ self.weights[k]
        return grads, delta

    # ---- optimization -------------------------------------------------------

    def adam_step(self, grads, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        """Standard Adam update with bias correction."""
        params = self.weights + self.biases
        # grads arrive per-layer as (dW, db); reorder to weights then biases
        flat = [dw for dw, _ in grads] + [db for _, db in grads]
        for k, g in enumerate(flat):
            if not np.all(np.isfinite(g)):
                layer = k % self.n_layers
                raise TrainingDivergedError(
                    f"non-finite gradient in layer {layer}", step=self.adam_step_count
                )
        self.adam_step_count += 1
        t = self.adam_step_count
        c1 = 1.0 - beta1 ** t
        c2 = 1.0 - beta2 ** t
        for p, g, m, v in zip(params, flat, self._adam_m, self._adam_v):
            m *= beta1
            m += (1.0 - beta1) * g
            v *= beta2
            v += (1.0 - beta2) * g * g
            p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)

    # ---- serialization ------------------------------------------------------

    def save(self, path, extra_meta=None):
        arrays = {}
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            arrays[f"w{k}"] = w
            arrays[f"b{k}"] = b
        meta = {"activations": self.activations}
        if extra_meta:
            meta.update(extra_meta)
        archive.save_archive(path, arrays, meta)

    @classmethod
    def load(cls, path):
        arrays, meta = archive.load_archive(path)
        acts = meta["activations"]
        weights = [arrays[f"w{k}"] for k in range(len(acts))]
        biases = [arrays[f"b{k}"] for k in range(len(acts))]
        net = cls(weights, biases, acts)
        return net, meta


def grad_check(net: MlpNet, loss_fn, x, eps=1e-5, max_params=200, seed=0):
    """Max relative error of backward vs central finite differences.

    ``loss_fn(y) -> (loss, dloss_dy)`` is evaluated on the net output; up to
    ``max_params`` parameters are sampled for the finite-difference probe.
    """
    y, cache = net.forward(x)
    _, dy = loss_fn(y)
    grads, _ = net.backward(cache, dy)

    rng = np.random.default_rng(seed)
    params = net.weights + net.biases
    analytic = [dw for dw, _ in grads] + [db for _, db in grads]
    sizes = np.array([p.size for p in params])
    total = sizes.sum()
    picks = rng.choice(total, size=min(max_params, total), replace=False)
    offsets = np.concatenate([[0], np.cumsum(sizes)])

    max_rel = 0.0
    for flat_idx in picks:
        pi = int(np.searchsorted(offsets, flat_idx, side="right") - 1)
        local = int(flat_idx - offsets[pi])
        p = params[pi].reshape(-1)
        old = p[local]
        p[local] = old + eps
        lp, _ = loss_fn(net.forward(x)[0])
        p[local] = old - eps
        lm, _ = loss_fn(net.forward(x)[0])
        p[local] = old
        fd = (lp - lm) / (2.0 * eps)
        an = analytic[pi].reshape(-1)[local]
        denom = max(abs(fd), abs(an), 1e-8)
        max_rel = max(max_rel, abs(fd - an) / denom)
    return max_rel


def softmax_rows(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def rowwise_cross_entropy(logits, onehot):
    """Mean-over-rows cross-entropy between row-wise softmax and one-hot rows.

    ``logits`` and ``onehot`` are (batch, rows, width).  Returns
    (loss, dloss_dlogits); the loss averages over the batch and over rows.
    """
    logits = np.asarray(logits, dtype=np.float64)
    onehot = np.asarray(onehot, dtype=np.float64)
    batch, rows, _ = logits.shape
    p = softmax_rows(logits)
    eps = 1e-300
    loss = -np.sum(onehot * np.log(p + eps)) / (batch * rows)
    grad = (p - onehot) / (batch * rows)
    return loss, grad
