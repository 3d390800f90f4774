"""Texture regressor: color-related descriptive code + noise -> texture params.

Trained with an l2 loss on the reconstructed UV image.  Because the texture
basis has orthonormal columns, the image-space l2 loss decomposes into a
coefficient-space term plus a constant (the off-basis residual), so training
never has to materialize full-resolution images.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .errors import TrainingDivergedError, ValidationError
from .nnet import MlpNet
from .schema import split_code


def image_l2(pred_image, gt_image):
    """Mean squared pixel error and its gradient w.r.t. the prediction."""
    pred = np.asarray(pred_image, dtype=np.float64)
    gt = np.asarray(gt_image, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValidationError("texture images must share a shape")
    diff = pred - gt
    n = diff.size
    return float(np.sum(diff * diff) / n), 2.0 * diff / n


class TextureRegressor(BaseEstimator):
    """MLP from flattened texture code + Gaussian noise to texture parameters."""

    def __init__(self, noise_dim=64, hidden_width=128, n_hidden=2, lr=0.001,
                 epochs=20, batch_size=128, passes_per_epoch=16, seed=0):
        self.noise_dim = noise_dim
        self.hidden_width = hidden_width
        self.n_hidden = n_hidden
        self.lr = lr
        self.epochs = epochs
        self.batch_size = batch_size
        self.passes_per_epoch = passes_per_epoch
        self.seed = seed

    def fit(self, corpus, texture_space):
        schema = corpus.schema
        entries = corpus.train_entries()
        if not entries:
            raise ValidationError("corpus has no training entries")
        codes = np.stack(
            [split_code(e.code, schema)[1].reshape(-1) for e in entries]
        )
        # image-space l2 against the gt texture equals coefficient-space l2
        # (orthonormal basis) plus a constant; train on coefficients directly
        gt_coeff = np.stack([texture_space.transform(e.texture) for e in entries])
        sigma = texture_space.singular_values_
        n_pixels = float(np.prod(texture_space.image_shape_))
        m = texture_space.n_components

        dims = [codes.shape[1] + self.noise_dim] + [self.hidden_width] * self.n_hidden + [m]
        net = MlpNet.create(dims, seed=self.seed)
        rng = np.random.default_rng(self.seed + 1)
        n_train = len(entries)
        log = []
        step = 0
        for epoch in range(1, self.epochs + 1):
            lr = self.lr * (0.5 if epoch > 10 else 1.0)
            losses = []
            for _ in range(self.passes_per_epoch):
                order = rng.permutation(n_train)
                for start in range(0, n_train, self.batch_size):
                    batch = order[start:start + self.batch_size]
                    b = len(batch)
                    noise = rng.standard_normal((b, self.noise_dim))
                    x = np.concatenate([codes[batch], noise], axis=1)
                    t, cache = net.forward(x)
                    diff = (t - gt_coeff[batch]) * sigma
                    loss = float(np.sum(diff * diff) / (b * n_pixels))
                    if not np.isfinite(loss):
                        raise TrainingDivergedError(
                            f"non-finite loss at step {step}", epoch=epoch, step=step
                        )
                    dt = 2.0 * diff * sigma / (b * n_pixels)
                    grads, _ = net.backward(cache, dt)
                    net.adam_step(grads, lr)
                    losses.append(loss)
                    step += 1
            log.append({"epoch": epoch, "step": step, "l2": float(np.mean(losses))})
        self.net_ = net
        self.training_log_ = log
        self.code_dim_ = codes.shape[1]
        return self

    def predict(self, texture_code_rows, noise_seed=0):
        """Texture parameters for one flattened texture-code submatrix.

        ``noise_seed=None`` uses zero noise (the deterministic center).
        """
        flat = np.asarray(texture_code_rows, dtype=np.float64).reshape(-1)
        if flat.size != self.code_dim_:
            raise ValidationError(
                f"expected texture code of length {self.code_dim_}, got {flat.size}"
            )
        if noise_seed is None:
            noise = np.zeros(self.noise_dim)
        else:
            noise = np.random.default_rng(noise_seed).standard_normal(self.noise_dim)
        x = np.concatenate([flat, noise])
        return self.net_.predict(x)[0]

    def save(self, path):
        self.net_.save(path, extra_meta={
            "kind": "texture_regressor",
            "code_dim": self.code_dim_,
            "noise_dim": self.noise_dim,
            "training_log": self.training_log_,
        })

    @classmethod
    def load(cls, path):
        net, meta = MlpNet.load(path)
        model = cls(noise_dim=int(meta["noise_dim"]))
        model.net_ = net
        model.code_dim_ = int(meta["code_dim"])
        model.training_log_ = meta.get("training_log", [])
        return model


def predict_texture(regressor, code, schema, texture_space, noise_seed=0):
    """Full DescriptiveCode -> (texture parameters, clamped UV image)."""
    _, texture_rows = split_code(code, schema)
    t = regressor.predict(texture_rows, noise_seed)
    return t, texture_space.synthesize(t, clamp=True)
