import os

import numpy as np
import pytest

from saliex import (BlockAveragePool, ConfigError, DegenerateEmbeddingError, Image,
                    RandomProjection, cosine_similarity, embed, make_embedder)
from saliex.embedders import normalize_rows

from conftest import ORACLES, rand_image


def batch(*images):
    return np.stack([im.pixels for im in images])


class TestNormalize:
    def test_unit_rows(self):
        rng = np.random.default_rng(0)
        out = normalize_rows(rng.normal(size=(5, 7)))
        np.testing.assert_allclose(np.linalg.norm(out, axis=1), 1.0, atol=1e-6)

    def test_zero_row_raises_by_default(self):
        rows = np.array([[1.0, 0.0], [0.0, 0.0]])
        with pytest.raises(DegenerateEmbeddingError):
            normalize_rows(rows)

    def test_zero_policy_keeps_zero(self):
        rows = np.array([[1.0, 0.0], [0.0, 0.0]])
        out = normalize_rows(rows, degenerate="zero")
        np.testing.assert_array_equal(out[1], [0.0, 0.0])

    def test_bad_policy_rejected(self):
        with pytest.raises(ConfigError):
            normalize_rows(np.ones((1, 2)), degenerate="ignore")


class TestBlockAverage:
    def test_dimension(self):
        emb = BlockAveragePool(4).embed_batch(batch(rand_image(32, 32)))
        assert emb.shape == (1, 4 * 4 * 3)

    def test_locality(self):
        """A change inside one pooling cell moves only that cell's features."""
        g = 4
        base = rand_image(32, 32, seed=1)
        px = base.pixels.copy()
        px[0:8, 0:8] = 0.0
        pooled = BlockAveragePool(g)

        def unnormalized(p):
            b, h, w, c = 1, 32, 32, 3
            cells = p.reshape(g, 8, g, 8, c).mean(axis=(1, 3))
            return cells.reshape(-1)

        diff = unnormalized(px) - unnormalized(base.pixels)
        changed = np.nonzero(np.abs(diff) > 1e-9)[0]
        assert set(changed.tolist()) <= {0, 1, 2}

    def test_matches_plain_mean_on_divisible_dims(self):
        img = rand_image(16, 16, seed=2)
        emb = BlockAveragePool(4).embed_batch(batch(img))[0]
        cells = img.pixels.reshape(4, 4, 4, 4, 3).mean(axis=(1, 3)).reshape(-1)
        np.testing.assert_allclose(emb, cells / np.linalg.norm(cells), atol=1e-6)

    def test_grid_exceeding_image_rejected(self):
        with pytest.raises(ConfigError):
            BlockAveragePool(64).embed_batch(batch(rand_image(32, 32)))

    def test_grid_validation(self):
        with pytest.raises(ConfigError):
            BlockAveragePool(0)


class TestRandomProjection:
    def test_golden_oracle(self):
        g = np.load(os.path.join(ORACLES, "randproj_golden.npz"))
        emb = RandomProjection(dim=int(g["dim"]), weight_seed=int(g["weight_seed"]))
        out = emb.embed_batch(g["pixels"])
        np.testing.assert_allclose(out, g["expected"], atol=1e-6)

    def test_weight_seed_changes_output(self):
        px = batch(rand_image(8, 8, seed=3))
        a = RandomProjection(dim=8, weight_seed=0).embed_batch(px)
        b = RandomProjection(dim=8, weight_seed=1).embed_batch(px)
        assert not np.allclose(a, b)

    def test_deterministic_across_instances(self):
        px = batch(rand_image(8, 8, seed=4))
        a = RandomProjection(dim=8, weight_seed=9).embed_batch(px)
        b = RandomProjection(dim=8, weight_seed=9).embed_batch(px)
        np.testing.assert_array_equal(a, b)

    def test_dim_lower_bound(self):
        with pytest.raises(ConfigError):
            RandomProjection(dim=1)


class TestSpecGrammar:
    @pytest.mark.parametrize("spec,cls,attr", [
        ("toy:block-avg:g=8", BlockAveragePool, ("grid", 8)),
        ("toy:block-avg:g=16", BlockAveragePool, ("grid", 16)),
        ("toy:rand-proj:d=128,seed=7", RandomProjection, ("dim", 128)),
        ("toy:rand-proj:d=32", RandomProjection, ("weight_seed", 0)),
        ("toy:rand-proj", RandomProjection, ("dim", 128)),
    ])
    def test_valid_specs(self, spec, cls, attr):
        emb = make_embedder(spec)
        assert isinstance(emb, cls)
        name, value = attr
        assert getattr(emb, name) == value

    @pytest.mark.parametrize("spec", [
        "", "toy", "toy:unknown:g=8", "toy:block-avg:grid=8", "toy:block-avg:g=x",
        "toy:rand-proj:d=128,bogus=1", "ext:udp=1:2", "ext:", "magic:stuff",
        "ext:tcp=nohost", "ext:cmd=",
    ])
    def test_invalid_specs_rejected(self, spec):
        with pytest.raises(ConfigError):
            make_embedder(spec)


class TestHelpers:
    def test_embed_accepts_images(self):
        imgs = [rand_image(8, 8, seed=i) for i in range(3)]
        out = embed(BlockAveragePool(2), imgs)
        assert out.shape == (3, 12)
        np.testing.assert_allclose(np.linalg.norm(out, axis=1), 1.0, atol=1e-6)

    def test_cosine_of_unit_vectors(self):
        a = np.array([1.0, 0.0])
        b = np.array([np.sqrt(0.5), np.sqrt(0.5)])
        assert cosine_similarity(a, b) == pytest.approx(np.sqrt(0.5))

    def test_batch_shape_validation(self):
        with pytest.raises(ConfigError):
            BlockAveragePool(2).embed_batch(np.zeros((8, 8, 3), dtype=np.float32))
