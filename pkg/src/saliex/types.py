"""Core domain types.

All types are immutable after construction (their arrays are marked
read-only), so they can be shared freely between concurrent workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

MASK_TYPES = ("binary", "random", "gaussian")


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr)
    if out is arr and arr.flags.writeable:
        out = arr.copy()
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Image:
    """An (H, W, C) float32 pixel grid with values in [0, 1].

    Channels are interleaved (row-major H, W, C); C is 1 or 3.  8-bit
    sources are divided by 255 on load so masking and occlusion-by-zero
    are exact regardless of the original file format.
    """

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float32)
        if px.ndim == 2:
            px = px[:, :, None]
        if px.ndim != 3 or px.shape[2] not in (1, 3):
            raise ConfigError(f"image must be (H, W, C) with C in (1, 3), got shape {px.shape}")
        if not np.all(np.isfinite(px)):
            raise ConfigError("image contains non-finite pixel values")
        if px.min() < 0.0 or px.max() > 1.0:
            raise ConfigError(
                f"image pixels must lie in [0, 1], got range [{px.min():.6g}, {px.max():.6g}]"
            )
        object.__setattr__(self, "pixels", _freeze(px))

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]


@dataclass(frozen=True)
class SaliencyMap:
    """Signed (H, W) float32 grid of pixel-wise correlation coefficients.

    Positive values mark similar-region evidence, negative values mark
    dissimilar regions; magnitudes never exceed 1.
    """

    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float32)
        if vals.ndim != 2:
            raise ConfigError(f"saliency map must be 2-D, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ConfigError("saliency map contains non-finite values")
        if np.abs(vals).max(initial=0.0) > 1.0 + 1e-9:
            raise ConfigError("saliency map magnitude exceeds 1")
        object.__setattr__(self, "values", _freeze(vals))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


def split_saliency(saliency: SaliencyMap) -> tuple[SaliencyMap, SaliencyMap]:
    """Split a signed map into (positive part, magnitude of negative part).

    Zero pixels land in the positive part as 0, and
    ``positive - negative`` reconstructs the signed map exactly.
    """
    vals = saliency.values
    plus = np.where(vals > 0, vals, np.float32(0.0))
    minus = np.where(vals < 0, -vals, np.float32(0.0))
    return SaliencyMap(plus), SaliencyMap(minus)


@dataclass(frozen=True)
class MaskGenConfig:
    """Parameters of the random occlusion-mask generator.

    ``mask_type`` selects how stamped patch interiors are filled:
    ``binary`` zeros them, ``random`` fills i.i.d. uniform [0, 1] values,
    ``gaussian`` fills Normal(0.5, 0.25^2) draws clamped to [0, 1].
    """

    num_masks: int = 1000
    patches_per_mask: int = 10
    patch_size: int = 30
    mask_type: str = "binary"

    def __post_init__(self):
        if self.num_masks < 1:
            raise ConfigError(f"num_masks must be >= 1, got {self.num_masks}")
        if self.patches_per_mask < 1:
            raise ConfigError(f"patches_per_mask must be >= 1, got {self.patches_per_mask}")
        if self.patch_size < 1:
            raise ConfigError(f"patch_size must be >= 1, got {self.patch_size}")
        if self.mask_type not in MASK_TYPES:
            raise ConfigError(f"mask_type must be one of {MASK_TYPES}, got {self.mask_type!r}")


@dataclass(frozen=True)
class MaskSet:
    """N perturbation masks stacked as (N, H, W), plus their provenance.

    Regenerating with the same config, dimensions, and seed reproduces
    identical values; see :func:`saliex.masks.generate_masks`.
    """

    masks: np.ndarray
    config: MaskGenConfig
    seed: int

    def __post_init__(self):
        m = np.asarray(self.masks, dtype=np.float32)
        if m.ndim != 3:
            raise ConfigError(f"mask stack must be (N, H, W), got shape {m.shape}")
        if m.shape[0] != self.config.num_masks:
            raise ConfigError(
                f"mask stack holds {m.shape[0]} masks but config.num_masks is {self.config.num_masks}"
            )
        object.__setattr__(self, "masks", _freeze(m))

    def __len__(self) -> int:
        return self.masks.shape[0]

    @property
    def height(self) -> int:
        return self.masks.shape[1]

    @property
    def width(self) -> int:
        return self.masks.shape[2]
