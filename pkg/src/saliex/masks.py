"""Seeded random occlusion-mask generation and application.

Each mask starts as all-ones and gets ``patches_per_mask`` square
patches stamped at uniformly random integer positions; patches may
overlap (later stamps overwrite).  Mask index k is generated from its
own counter-derived RNG stream, so a set can be produced in any order
or in parallel and still come out identical.

The per-mask draw sequence is fixed: for each patch in turn, one
integer ``top`` uniform on [0, H - patch_size], one integer ``left``
uniform on [0, W - patch_size], then for non-binary fills one
(patch_size, patch_size) block of fill values, all from the mask's
``indexed_rng(seed, k)`` stream in that order.  This sequence is a
compatibility contract: changing it changes every downstream map.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .errors import ConfigError
from .seeding import indexed_rng
from .types import Image, MaskGenConfig, MaskSet


def _single_mask(config: MaskGenConfig, height: int, width: int,
                 seed: int, index: int) -> np.ndarray:
    rng = indexed_rng(seed, index)
    mask = np.ones((height, width), dtype=np.float32)
    ps = config.patch_size
    for _ in range(config.patches_per_mask):
        top = int(rng.integers(0, height - ps + 1))
        left = int(rng.integers(0, width - ps + 1))
        if config.mask_type == "binary":
            mask[top:top + ps, left:left + ps] = 0.0
        elif config.mask_type == "random":
            mask[top:top + ps, left:left + ps] = rng.uniform(0.0, 1.0, (ps, ps)).astype(np.float32)
        else:
            fill = rng.normal(0.5, 0.25, (ps, ps))
            mask[top:top + ps, left:left + ps] = np.clip(fill, 0.0, 1.0).astype(np.float32)
    return mask


def mask_batch(config: MaskGenConfig, image_dims: tuple[int, int], seed: int,
               start: int, count: int) -> np.ndarray:
    """Masks ``start .. start+count-1`` of the set as an (count, H, W) array.

    Slicing by index is exact: concatenating batches reproduces
    :func:`generate_masks` bit for bit, which is what lets the explainer
    stream mask batches instead of materializing the whole set.
    """
    height, width = image_dims
    if config.patch_size > min(height, width):
        raise ConfigError(
            f"patch_size {config.patch_size} exceeds min image dimension {min(height, width)}"
        )
    if start < 0 or count < 0 or start + count > config.num_masks:
        raise ConfigError(
            f"mask range [{start}, {start + count}) outside [0, {config.num_masks})"
        )
    out = np.empty((count, height, width), dtype=np.float32)
    for i in range(count):
        out[i] = _single_mask(config, height, width, seed, start + i)
    return out


def generate_masks(config: MaskGenConfig, image_dims: tuple[int, int],
                   seed: int, workers: int = 1) -> MaskSet:
    """Build the N-mask set for given image dimensions.

    Same (config, dims, seed) always yields bit-identical masks, for any
    ``workers`` count, because each mask draws from its own indexed RNG
    stream and results are placed by index.
    """
    height, width = image_dims
    if config.patch_size > min(height, width):
        raise ConfigError(
            f"patch_size {config.patch_size} exceeds min image dimension {min(height, width)}"
        )
    stack = np.empty((config.num_masks, height, width), dtype=np.float32)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for k, mask in enumerate(
                pool.map(lambda i: _single_mask(config, height, width, seed, i),
                         range(config.num_masks))
            ):
                stack[k] = mask
    else:
        for k in range(config.num_masks):
            stack[k] = _single_mask(config, height, width, seed, k)
    return MaskSet(stack, config, seed)


def apply_mask(image: Image, mask: np.ndarray) -> Image:
    """Pixel-wise product of an image with an (H, W) mask.

    The mask broadcasts across channels; an all-ones mask is the
    identity and an all-zeros mask blacks the image out.
    """
    mask = np.asarray(mask, dtype=np.float32)
    if mask.shape != (image.height, image.width):
        raise ConfigError(
            f"mask shape {mask.shape} does not match image {image.height}x{image.width}"
        )
    return Image(image.pixels * mask[:, :, None])


def dump_masks(mask_set: MaskSet, out_dir: str) -> list[str]:
    """Write one PFM per mask as ``mask_{index:05}.pfm`` for audit."""
    from .imaging import save_pfm
    from .types import SaliencyMap

    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for k in range(len(mask_set)):
        path = os.path.join(out_dir, f"mask_{k:05}.pfm")
        save_pfm(SaliencyMap(mask_set.masks[k]), path)
        paths.append(path)
    return paths
