import numpy as np
import pytest

from saliex import ConfigError, Image, MaskGenConfig, MaskSet, SaliencyMap, split_saliency

from conftest import rand_image


class TestImage:
    def test_valid_rgb(self):
        img = rand_image(8, 10, 3)
        assert (img.height, img.width, img.channels) == (8, 10, 3)
        assert img.pixels.dtype == np.float32

    def test_valid_grayscale(self):
        img = Image(np.zeros((4, 4, 1), dtype=np.float32))
        assert img.channels == 1

    def test_range_enforced(self):
        bad = np.full((4, 4, 3), 1.5, dtype=np.float32)
        with pytest.raises(ConfigError):
            Image(bad)
        with pytest.raises(ConfigError):
            Image(-bad)

    def test_nan_rejected(self):
        px = np.zeros((4, 4, 3), dtype=np.float32)
        px[0, 0, 0] = np.nan
        with pytest.raises(ConfigError):
            Image(px)

    def test_grayscale_2d_promoted(self):
        img = Image(np.zeros((4, 5), dtype=np.float32))
        assert img.pixels.shape == (4, 5, 1)

    def test_bad_rank_rejected(self):
        with pytest.raises(ConfigError):
            Image(np.zeros((2, 2, 2, 2), dtype=np.float32))

    def test_bad_channel_count_rejected(self):
        with pytest.raises(ConfigError):
            Image(np.zeros((4, 4, 2), dtype=np.float32))

    def test_pixels_read_only(self):
        img = rand_image(4, 4)
        with pytest.raises(ValueError):
            img.pixels[0, 0, 0] = 0.0


class TestSaliencyMap:
    def test_valid(self):
        m = SaliencyMap(np.linspace(-1, 1, 16, dtype=np.float32).reshape(4, 4))
        assert (m.height, m.width) == (4, 4)

    def test_bound_enforced(self):
        with pytest.raises(ConfigError):
            SaliencyMap(np.full((3, 3), 1.5, dtype=np.float32))

    def test_float64_overshoot_tolerated(self):
        # tiny arithmetic overshoot collapses to 1.0 in the float32 cast
        m = SaliencyMap(np.full((3, 3), 1.0 + 5e-10, dtype=np.float64))
        assert m.values.max() == 1.0

    def test_nonfinite_rejected(self):
        vals = np.zeros((3, 3), dtype=np.float32)
        vals[1, 1] = np.inf
        with pytest.raises(ConfigError):
            SaliencyMap(vals)

    def test_split_reconstructs_signed(self):
        rng = np.random.default_rng(3)
        signed = SaliencyMap(rng.uniform(-1, 1, (9, 7)).astype(np.float32))
        plus, minus = split_saliency(signed)
        assert (plus.values >= 0).all() and (minus.values >= 0).all()
        np.testing.assert_array_equal(plus.values - minus.values, signed.values)
        # disjoint support: no pixel carries both polarities
        assert not np.any((plus.values > 0) & (minus.values > 0))


class TestMaskConfig:
    def test_defaults(self):
        cfg = MaskGenConfig()
        assert (cfg.num_masks, cfg.patches_per_mask, cfg.patch_size) == (1000, 10, 30)
        assert cfg.mask_type == "binary"

    @pytest.mark.parametrize("kwargs", [
        {"num_masks": 0}, {"patches_per_mask": 0}, {"patch_size": 0},
        {"mask_type": "plaid"},
    ])
    def test_invalid_rejected(self, kwargs):
        with pytest.raises(ConfigError):
            MaskGenConfig(**kwargs)

    def test_mask_set_shape_checked(self):
        cfg = MaskGenConfig(num_masks=3)
        with pytest.raises(ConfigError):
            MaskSet(np.ones((2, 8, 8), dtype=np.float32), cfg, seed=0)
        with pytest.raises(ConfigError):
            MaskSet(np.ones((3, 8), dtype=np.float32), cfg, seed=0)
