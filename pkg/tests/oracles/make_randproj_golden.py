"""Regenerate randproj_golden.npz from the documented recipe alone.

The projection embedder's contract: weights are one standard-normal
(dim, H*W*C) matrix from default_rng(weight_seed); an image embeds as
the L2-normalized product of its flattened float64 pixels with the
transposed matrix.  Run from this directory:
python3 make_randproj_golden.py
"""

import numpy as np

DIM, WEIGHT_SEED = 16, 5
BATCH, H, W, C = 4, 8, 8, 3

pixels = np.random.default_rng(123).random((BATCH, H, W, C)).astype(np.float32)
mat = np.random.default_rng(WEIGHT_SEED).standard_normal((DIM, H * W * C))
emb = pixels.reshape(BATCH, -1).astype(np.float64) @ mat.T
emb /= np.linalg.norm(emb, axis=1, keepdims=True)

np.savez("randproj_golden.npz", dim=DIM, weight_seed=WEIGHT_SEED,
         pixels=pixels, expected=emb)
print("wrote randproj_golden.npz")
