import numpy as np
import pytest

from saliex import (ConfigError, FormatError, Image, SaliencyMap, load_image,
                    load_pfm, render_overlay, save_pfm, save_png)
from saliex.imaging import _bilinear_resize, ensure_dir

from conftest import rand_image


class TestPngRoundTrip:
    def test_rgb_within_quantization(self, tmp_path):
        img = rand_image(12, 9, seed=1)
        path = str(tmp_path / "img.png")
        save_png(img, path)
        back = load_image(path)
        assert back.pixels.shape == (12, 9, 3)
        # 8-bit storage: half a quantization step max
        assert np.abs(back.pixels - img.pixels).max() <= 0.5 / 255 + 1e-6

    def test_quantized_values_exact(self, tmp_path):
        px = (np.arange(48, dtype=np.float32).reshape(4, 4, 3) * 5) / 255.0
        img = Image(px)
        path = str(tmp_path / "exact.png")
        save_png(img, path)
        np.testing.assert_array_equal(load_image(path).pixels, px)

    def test_grayscale_file_replicated_to_rgb(self, tmp_path):
        img = Image(np.linspace(0, 1, 16, dtype=np.float32).reshape(4, 4, 1))
        path = str(tmp_path / "gray.png")
        save_png(img, path)
        back = load_image(path, channels=3)
        assert back.channels == 3
        np.testing.assert_array_equal(back.pixels[:, :, 0], back.pixels[:, :, 1])

    def test_rgb_to_single_channel_mean(self, tmp_path):
        img = rand_image(6, 6, seed=2)
        path = str(tmp_path / "rgb.png")
        save_png(img, path)
        back = load_image(path, channels=1)
        assert back.channels == 1

    def test_missing_file(self):
        with pytest.raises(FileNotFoundError):
            load_image("/nonexistent/nope.png")

    def test_corrupt_file(self, tmp_path):
        path = str(tmp_path / "junk.png")
        with open(path, "wb") as fh:
            fh.write(b"this is not an image at all")
        with pytest.raises(FormatError):
            load_image(path)

    def test_bad_channels_arg(self):
        with pytest.raises(ConfigError):
            load_image("whatever.png", channels=2)


class TestResize:
    def test_target_resize_shape(self, tmp_path):
        img = rand_image(20, 30, seed=3)
        path = str(tmp_path / "wide.png")
        save_png(img, path)
        back = load_image(path, target=(10, 10))
        assert back.pixels.shape == (10, 10, 3)

    def test_exact_2x_downscale_is_block_mean(self):
        px = np.random.default_rng(4).random((8, 8, 3)).astype(np.float32)
        out = _bilinear_resize(px, 4, 4)
        want = px.reshape(4, 2, 4, 2, 3).mean(axis=(1, 3))
        np.testing.assert_allclose(out, want, atol=1e-6)

    def test_identity_when_at_target(self):
        px = np.random.default_rng(5).random((6, 6, 3)).astype(np.float32)
        assert _bilinear_resize(px, 6, 6) is px


class TestPfm:
    def test_lossless_round_trip(self, tmp_path):
        m = SaliencyMap(np.random.default_rng(6).uniform(-1, 1, (11, 7)).astype(np.float32))
        path = str(tmp_path / "map.pfm")
        save_pfm(m, path)
        back = load_pfm(path)
        np.testing.assert_array_equal(back.values, m.values)

    def test_header_bytes(self, tmp_path):
        m = SaliencyMap(np.zeros((2, 3), dtype=np.float32))
        path = str(tmp_path / "hdr.pfm")
        save_pfm(m, path)
        raw = open(path, "rb").read()
        assert raw.startswith(b"Pf\n3 2\n-1.0\n")
        assert len(raw) == len(b"Pf\n3 2\n-1.0\n") + 4 * 6

    def test_bottom_up_scanline_order(self, tmp_path):
        vals = np.array([[0.25, 0.25], [-0.5, -0.5]], dtype=np.float32)
        path = str(tmp_path / "rows.pfm")
        save_pfm(SaliencyMap(vals), path)
        raw = open(path, "rb").read()
        body = np.frombuffer(raw[len(b"Pf\n2 2\n-1.0\n"):], dtype="<f4")
        # bottom row first on disk
        np.testing.assert_array_equal(body[:2], [-0.5, -0.5])

    def test_big_endian_scale_accepted(self, tmp_path):
        vals = np.array([[0.5, -0.5]], dtype=">f4")
        path = str(tmp_path / "be.pfm")
        with open(path, "wb") as fh:
            fh.write(b"Pf\n2 1\n1.0\n" + vals.tobytes())
        back = load_pfm(path)
        np.testing.assert_array_equal(back.values, [[0.5, -0.5]])

    @pytest.mark.parametrize("content", [
        b"", b"PF\n2 2\n-1.0\n" + b"\0" * 32, b"Pf\n2\n-1.0\n",
        b"Pf\nx 2\n-1.0\n", b"Pf\n2 2\n0.0\n" + b"\0" * 16,
        b"Pf\n2 2\n-1.0\n" + b"\0" * 8,
    ])
    def test_malformed_rejected(self, tmp_path, content):
        path = str(tmp_path / "bad.pfm")
        with open(path, "wb") as fh:
            fh.write(content)
        with pytest.raises(FormatError):
            load_pfm(path)


class TestOverlay:
    def test_alpha_zero_is_identity(self):
        img = rand_image(8, 8, seed=7)
        m = SaliencyMap(np.random.default_rng(8).uniform(-1, 1, (8, 8)).astype(np.float32))
        out = render_overlay(img, m, 0.0)
        np.testing.assert_allclose(out.pixels, img.pixels, atol=1e-6)

    def test_alpha_one_is_pure_heatmap(self):
        img = rand_image(4, 4, seed=9)
        vals = np.zeros((4, 4), dtype=np.float32)
        vals[0, 0] = 1.0
        vals[3, 3] = -1.0
        out = render_overlay(img, SaliencyMap(vals), 1.0)
        np.testing.assert_allclose(out.pixels[0, 0], [1.0, 0.0, 0.0], atol=1e-6)
        np.testing.assert_allclose(out.pixels[3, 3], [0.0, 0.0, 1.0], atol=1e-6)

    def test_zero_map_renders(self):
        img = rand_image(4, 4, seed=10)
        out = render_overlay(img, SaliencyMap(np.zeros((4, 4), dtype=np.float32)), 0.5)
        assert out.pixels.min() >= 0.0 and out.pixels.max() <= 1.0

    def test_validation(self):
        img = rand_image(4, 4)
        m = SaliencyMap(np.zeros((4, 4), dtype=np.float32))
        with pytest.raises(ConfigError):
            render_overlay(img, m, 1.5)
        with pytest.raises(ConfigError):
            render_overlay(img, SaliencyMap(np.zeros((5, 4), dtype=np.float32)), 0.5)

    def test_grayscale_base(self):
        img = Image(np.full((4, 4, 1), 0.5, dtype=np.float32))
        m = SaliencyMap(np.zeros((4, 4), dtype=np.float32))
        out = render_overlay(img, m, 0.3)
        assert out.channels == 3


def test_ensure_dir(tmp_path):
    target = str(tmp_path / "a" / "b")
    assert ensure_dir(target) == target
    assert ensure_dir(target) == target  # idempotent
