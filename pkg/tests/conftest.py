import os
import sys

import numpy as np
import pytest

from saliex import BlockAveragePool, Image, ToySetConfig, build_toyset

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")
ORACLES = os.path.join(os.path.dirname(__file__), "oracles")


def rand_image(height=32, width=32, channels=3, seed=0):
    rng = np.random.default_rng(seed)
    return Image(rng.random((height, width, channels)).astype(np.float32))


@pytest.fixture(scope="session")
def tiny_toyset():
    # small true-to-default-shape set shared by unit tests
    return build_toyset(ToySetConfig(subjects=3, images_per_subject=2,
                                     height=48, width=48, patch_size=12, seed=7))


@pytest.fixture(scope="session")
def block_emb():
    return BlockAveragePool(8)


@pytest.fixture(scope="session")
def ext_server_cmd():
    script = os.path.join(FIXTURES, "ext_embedder_server.py")
    return f"{sys.executable} {script}"
