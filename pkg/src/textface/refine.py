"""Prompt-driven refinement of (shape, texture) parameters.

Minimizes, over the three default views,

    L = mean_view (1 - score(render)) + beta1 * |s - s_o|_2 + beta2 * |t - t_o|_2

by gradient descent with backtracking (monotone loss trace).  The texture
gradient is analytic through the linear texture model and the renderer's
texture-to-image sparse map; the shape gradient uses central finite
differences on the leading shape components, the rest stay frozen.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError, ValidationError
from .render import default_views, render, render_with_map, to_gray


# ---------------------------------------------------------------------------
# scorers
# ---------------------------------------------------------------------------

class PromptScorer:
    """Scores an image against a prompt, with an analytic pixel gradient.

    ``score`` should be roughly in [0, 1]; ``gradient`` must match central
    finite differences within 1e-3 relative error.
    """

    def score(self, image, prompt):
        raise NotImplementedError

    def gradient(self, image, prompt):
        raise NotImplementedError


def _band(image, rows, cols):
    h, w = image.shape[:2]
    r0, r1 = int(rows[0] * h), int(rows[1] * h)
    c0, c1 = int(cols[0] * w), int(cols[1] * w)
    return (slice(r0, r1), slice(c0, c1))

# image-fraction bands where facial features land under the default camera
_LIP_BAND = ((0.64, 0.78), (0.36, 0.64))
_EYE_BANDS = (((0.44, 0.56), (0.28, 0.42)), ((0.44, 0.56), (0.58, 0.72)))
_FACE_BAND = ((0.30, 0.80), (0.30, 0.70))

_LUMA = np.array([0.299, 0.587, 0.114])


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


class MakeupScorer(PromptScorer):
    """Lip-band redness plus eye-band color saturation, squashed to (0, 1)."""

    def __init__(self, redness_gain=4.0, saturation_gain=2.0, center=0.5, slope=2.0):
        self.redness_gain = redness_gain
        self.saturation_gain = saturation_gain
        self.center = center
        self.slope = slope

    def _raw(self, image):
        lips = image[_band(image, *_LIP_BAND)]
        red = float(np.mean(lips[..., 0] - 0.5 * lips[..., 1] - 0.5 * lips[..., 2]))
        sat = 0.0
        for rows, cols in _EYE_BANDS:
            eye = image[_band(image, rows, cols)]
            dev = eye - eye.mean(axis=2, keepdims=True)
            sat += float(np.mean(np.sum(dev * dev, axis=2)))
        return self.redness_gain * red + self.saturation_gain * sat / len(_EYE_BANDS)

    def score(self, image, prompt):
        return float(_sigmoid(self.slope * (self._raw(image) - self.center)))

    def gradient(self, image, prompt):
        s = self.score(image, prompt)
        outer = s * (1.0 - s) * self.slope
        grad = np.zeros_like(image)
        sl = _band(image, *_LIP_BAND)
        n = image[sl][..., 0].size
        grad[sl] += outer * self.redness_gain / n * np.array([1.0, -0.5, -0.5])
        for rows, cols in _EYE_BANDS:
            se = _band(image, rows, cols)
            eye = image[se]
            dev = eye - eye.mean(axis=2, keepdims=True)
            grad[se] += (
                outer * self.saturation_gain / len(_EYE_BANDS)
                * 2.0 * dev / (eye.size / 3)
            )
        return grad


class AgingScorer(PromptScorer):
    """Face-band luminance variance as a contrast/wrinkle proxy."""

    def __init__(self, gain=60.0, center=0.5):
        self.gain = gain
        self.center = center

    def score(self, image, prompt):
        face = to_gray(image[_band(image, *_FACE_BAND)])
        return float(_sigmoid(self.gain * (face.var() - self.center / self.gain)))

    def gradient(self, image, prompt):
        sl = _band(image, *_FACE_BAND)
        face = to_gray(image[sl])
        s = self.score(image, prompt)
        dvar = 2.0 * (face - face.mean()) / face.size
        grad = np.zeros_like(image)
        grad[sl] = s * (1.0 - s) * self.gain * dvar[..., None] * _LUMA
        return grad


class BrightnessScorer(PromptScorer):
    """Mean image luminance."""

    def score(self, image, prompt):
        return float(np.mean(to_gray(image)))

    def gradient(self, image, prompt):
        h, w = image.shape[:2]
        return np.broadcast_to(_LUMA / (h * w), image.shape).copy()


class ConstantScorer(PromptScorer):
    """Prompt-independent constant; refinement becomes a pure proximal pull."""

    def __init__(self, value=1.0):
        self.value = value

    def score(self, image, prompt):
        return float(self.value)

    def gradient(self, image, prompt):
        return np.zeros_like(image)


def builtin_scorers():
    return {
        "makeup": MakeupScorer(),
        "aging": AgingScorer(),
        "brightness": BrightnessScorer(),
        "constant": ConstantScorer(),
    }


def scorer_grad_check(scorer, image, prompt, eps=1e-5, n_probes=40, seed=0):
    """Max relative error of the analytic pixel gradient vs central FD."""
    grad = scorer.gradient(image, prompt)
    rng = np.random.default_rng(seed)
    h, w, _ = image.shape
    max_rel = 0.0
    for _ in range(n_probes):
        i, j, c = rng.integers(0, h), rng.integers(0, w), rng.integers(0, 3)
        probe = image.copy()
        probe[i, j, c] += eps
        sp = scorer.score(probe, prompt)
        probe[i, j, c] -= 2 * eps
        sm = scorer.score(probe, prompt)
        fd = (sp - sm) / (2 * eps)
        denom = max(abs(fd), abs(grad[i, j, c]), 1e-6)
        max_rel = max(max_rel, abs(fd - grad[i, j, c]) / denom)
    return max_rel


# ---------------------------------------------------------------------------
# the optimizer
# ---------------------------------------------------------------------------

@dataclass
class RefineConfig:
    iters: int = 200
    step: float = 0.05
    beta1: float = 3.0
    beta2: float = 0.003
    n_fd_components: int = 16
    fd_eps: float = 1e-2
    max_halvings: int = 5
    views: tuple = field(default_factory=default_views)


def _l2(x):
    return float(np.linalg.norm(x))


def _l2_grad(x):
    n = np.linalg.norm(x)
    return x / n if n > 0 else np.zeros_like(x)


class _RefineProblem:
    def __init__(self, s_o, t_o, prompt, scorer, shape_model, texture_model, cfg):
        self.s_o, self.t_o = s_o, t_o
        self.prompt, self.scorer, self.cfg = prompt, scorer, cfg
        self.shape_model, self.texture_model = shape_model, texture_model

    def _texture(self, t):
        # unclamped: keeps the image exactly linear in t for the gradient
        return self.texture_model.synthesize(t)

    def score_term(self, mesh, texture):
        scores = [
            self.scorer.score(render(mesh, texture, v, cull_backfaces=True), self.prompt)
            for v in self.cfg.views
        ]
        return float(np.mean(scores))

    def loss(self, s, t, texture=None):
        mesh = self.shape_model.synthesize(s)
        texture = self._texture(t) if texture is None else texture
        mean_score = self.score_term(mesh, texture)
        reg_s = self.cfg.beta1 * _l2(s - self.s_o)
        reg_t = self.cfg.beta2 * _l2(t - self.t_o)
        return (1.0 - mean_score) + reg_s + reg_t, mean_score, reg_s, reg_t

    def smooth_gradients(self, s, t):
        """Gradients of the score term alone: (mean_score, dS/ds, dS/dt).

        The non-smooth regularizers are handled by the proximal shrinkage in
        the optimizer loop, not by these gradients.
        """
        cfg = self.cfg
        mesh = self.shape_model.synthesize(s)
        texture = self._texture(t)

        # analytic t-gradient through the sparse texture->image maps
        scores = []
        g_tex = np.zeros(texture.size)
        for view in cfg.views:
            image, smap, _ = render_with_map(mesh, texture, view, cull_backfaces=True)
            scores.append(self.scorer.score(image, self.prompt))
            g_img = self.scorer.gradient(image, self.prompt).reshape(-1, 3)
            g_pix = np.stack([smap.T @ g_img[:, c] for c in range(3)], axis=1)
            g_tex += g_pix.reshape(-1)
        mean_score = float(np.mean(scores))
        g_tex *= -1.0 / len(cfg.views)  # d(1 - mean score)/d texture
        jac = self.texture_model.basis_ * self.texture_model.singular_values_
        g_t = jac.T @ g_tex

        # central-difference s-gradient on the leading components
        g_s = np.zeros_like(s)
        n_fd = min(cfg.n_fd_components, len(s))
        for k in range(n_fd):
            probe = s.copy()
            probe[k] += cfg.fd_eps
            sp = 1.0 - self.score_term(self.shape_model.synthesize(probe), texture)
            probe[k] -= 2 * cfg.fd_eps
            sm = 1.0 - self.score_term(self.shape_model.synthesize(probe), texture)
            g_s[k] = (sp - sm) / (2 * cfg.fd_eps)
        return mean_score, g_s, g_t


def _prox_toward(x, anchor, amount):
    """Shrink ``x`` toward ``anchor``: the proximal map of amount * |x-a|_2."""
    delta = x - anchor
    norm = np.linalg.norm(delta)
    if norm <= amount:
        return anchor.copy()
    return anchor + (1.0 - amount / norm) * delta


def abstract_refine(s_o, t_o, prompt, scorer, shape_model, texture_model, cfg=None):
    """Refine (s, t) from (s_o, t_o) toward the prompt; returns (s, t, trace).

    The trace is one record per iteration: {iter, loss, score, reg_s, reg_t};
    backtracking keeps it non-increasing.  A non-finite loss aborts with the
    partial trace attached to the error.

    Each iteration takes a gradient step on the smooth score term followed by
    the closed-form proximal shrinkage of the two l2-norm regularizers (they
    are non-smooth at the anchors, so plain joint gradient steps stall there);
    total-loss backtracking then guarantees the monotone trace.
    """
    cfg = cfg or RefineConfig()
    s = np.array(s_o, dtype=np.float64)
    t = np.array(t_o, dtype=np.float64)
    if s.ndim != 1 or t.ndim != 1:
        raise ValidationError("s and t must be parameter vectors")
    problem = _RefineProblem(s.copy(), t.copy(), prompt, scorer,
                             shape_model, texture_model, cfg)
    trace = []
    loss, score, reg_s, reg_t = problem.loss(s, t)
    for it in range(1, cfg.iters + 1):
        if not np.isfinite(loss):
            err = NumericalError(f"non-finite refinement loss at iteration {it}")
            err.trace = trace
            raise err
        _, g_s, g_t = problem.smooth_gradients(s, t)
        step = cfg.step
        accepted = False
        for _ in range(cfg.max_halvings + 1):
            s_new = _prox_toward(s - step * g_s, problem.s_o, step * cfg.beta1)
            t_new = _prox_toward(t - step * g_t, problem.t_o, step * cfg.beta2)
            new_loss, new_score, new_rs, new_rt = problem.loss(s_new, t_new)
            if np.isfinite(new_loss) and new_loss <= loss:
                s, t = s_new, t_new
                loss, score, reg_s, reg_t = new_loss, new_score, new_rs, new_rt
                accepted = True
                break
            step *= 0.5
        # when every halving fails the point is kept and the trace stays flat
        trace.append({"iter": it, "loss": loss, "score": score,
                      "reg_s": reg_s, "reg_t": reg_t, "accepted": accepted})
    return s, t, trace
