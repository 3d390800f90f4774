"""Texture regressor and its image-space l2 loss."""

import numpy as np
import pytest

from textface.errors import ValidationError
from textface.schema import split_code
from textface.texgen import TextureRegressor, image_l2, predict_texture


class TestImageL2:
    def test_hand_value(self):
        pred = np.ones((2, 2, 3))
        gt = np.zeros((2, 2, 3))
        loss, grad = image_l2(pred, gt)
        assert loss == pytest.approx(1.0)
        assert np.allclose(grad, 2.0 / 12.0)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(0)
        pred = rng.uniform(0, 1, (3, 3, 3))
        gt = rng.uniform(0, 1, (3, 3, 3))
        _, grad = image_l2(pred, gt)
        eps = 1e-6
        for _ in range(10):
            i, j, c = rng.integers(0, 3, size=3)
            p = pred.copy()
            p[i, j, c] += eps
            lp = image_l2(p, gt)[0]
            p[i, j, c] -= 2 * eps
            lm = image_l2(p, gt)[0]
            assert abs((lp - lm) / (2 * eps) - grad[i, j, c]) < 1e-8

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValidationError):
            image_l2(np.zeros((2, 2, 3)), np.zeros((3, 3, 3)))


@pytest.fixture(scope="module")
def quick_regressor(small_corpus, small_texture_space):
    return TextureRegressor(
        noise_dim=16, hidden_width=128, epochs=12, passes_per_epoch=8, seed=0
    ).fit(small_corpus, small_texture_space)


class TestTextureRegressor:
    def test_training_loss_drops_substantially(self, quick_regressor):
        log = quick_regressor.training_log_
        assert log[-1]["l2"] < 0.5 * log[0]["l2"]

    def test_predict_is_deterministic(self, quick_regressor, small_corpus, schema):
        code = small_corpus.entries[0].code
        rows = split_code(code, schema)[1]
        assert np.array_equal(
            quick_regressor.predict(rows, noise_seed=3),
            quick_regressor.predict(rows, noise_seed=3),
        )

    def test_clamped_image_in_unit_interval(self, quick_regressor, small_corpus,
                                            schema, small_texture_space):
        code = small_corpus.entries[0].code
        _, image = predict_texture(quick_regressor, code, schema, small_texture_space)
        assert image.min() >= 0.0 and image.max() <= 1.0
        assert image.shape == small_texture_space.image_shape_

    def test_zero_noise_prediction_tracks_own_texture(self, quick_regressor,
                                                      small_corpus, schema,
                                                      small_texture_space):
        """With zero noise the regressor should sit closer to the entry's own
        texture than to a strongly contrasting entry's texture, for most
        training entries."""
        entries = small_corpus.train_entries()
        lum = [float(e.texture.mean()) for e in entries]
        bright = entries[int(np.argmax(lum))]
        dark = entries[int(np.argmin(lum))]
        wins = 0
        for e in (bright, dark):
            _, img = predict_texture(
                quick_regressor, e.code, schema, small_texture_space, noise_seed=None
            )
            other = dark if e is bright else bright
            if np.abs(img - e.texture).mean() < np.abs(img - other.texture).mean():
                wins += 1
        assert wins == 2

    def test_wrong_code_length_rejected(self, quick_regressor):
        with pytest.raises(ValidationError):
            quick_regressor.predict(np.zeros(5))

    def test_save_load_round_trip(self, quick_regressor, small_corpus, schema, tmp_path):
        quick_regressor.save(tmp_path / "reg")
        loaded = TextureRegressor.load(tmp_path / "reg")
        rows = split_code(small_corpus.entries[0].code, schema)[1]
        assert np.array_equal(
            quick_regressor.predict(rows, 9), loaded.predict(rows, 9)
        )
