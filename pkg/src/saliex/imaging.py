"""Image decode/encode, resizing, float-map persistence, overlay rendering.

All functions here are pure; concurrent use is fine.  Raw saliency maps
are persisted as grayscale PFM (lossless float32), overlays as 8-bit
RGB PNG.
"""

from __future__ import annotations

import os

import numpy as np
from PIL import Image as PILImage, UnidentifiedImageError

from .errors import ConfigError, FormatError
from .types import Image, SaliencyMap


def _bilinear_resize(px: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Half-pixel-center bilinear resampling of an (H, W, C) float array.

    At exact 2x downscale every output pixel is the average of its 2x2
    source block, which keeps resampling auditable against a hand oracle.
    """
    in_h, in_w = px.shape[:2]
    if (in_h, in_w) == (out_h, out_w):
        return px
    # source coordinate of each output pixel center
    ys = (np.arange(out_h, dtype=np.float64) + 0.5) * (in_h / out_h) - 0.5
    xs = (np.arange(out_w, dtype=np.float64) + 0.5) * (in_w / out_w) - 0.5
    y0 = np.clip(np.floor(ys), 0, in_h - 1).astype(np.intp)
    x0 = np.clip(np.floor(xs), 0, in_w - 1).astype(np.intp)
    y1 = np.minimum(y0 + 1, in_h - 1)
    x1 = np.minimum(x0 + 1, in_w - 1)
    wy = np.clip(ys - y0, 0.0, 1.0)[:, None, None]
    wx = np.clip(xs - x0, 0.0, 1.0)[None, :, None]
    p = px.astype(np.float64)
    top = p[y0][:, x0] * (1 - wx) + p[y0][:, x1] * wx
    bot = p[y1][:, x0] * (1 - wx) + p[y1][:, x1] * wx
    return (top * (1 - wy) + bot * wy).astype(np.float32)


def _center_crop(px: np.ndarray, target_h: int, target_w: int) -> np.ndarray:
    """Crop the largest centered window matching the target aspect ratio."""
    h, w = px.shape[:2]
    # compare aspect ratios via cross-multiplication to stay in integers
    if w * target_h > h * target_w:
        crop_w = max(1, (h * target_w) // target_h)
        x0 = (w - crop_w) // 2
        return px[:, x0:x0 + crop_w]
    if w * target_h < h * target_w:
        crop_h = max(1, (w * target_h) // target_w)
        y0 = (h - crop_h) // 2
        return px[y0:y0 + crop_h, :]
    return px


def load_image(path: str, target: tuple[int, int] | None = None, channels: int = 3) -> Image:
    """Decode an image file and prepare it for the recognition pipeline.

    The file is decoded (PNG/JPEG/BMP), scaled to [0, 1], center-cropped
    to the target aspect ratio, and bilinearly resized to ``target``
    (H, W).  A file already at the target size passes through exactly as
    pixels/255.  Grayscale sources are replicated when 3 channels are
    requested.
    """
    if channels not in (1, 3):
        raise ConfigError(f"channels must be 1 or 3, got {channels}")
    try:
        with PILImage.open(path) as img:
            if img.mode in ("L", "I", "I;16", "F"):
                img = img.convert("L")
            elif img.mode != "RGB":
                img = img.convert("RGB")
            px = np.asarray(img)
    except FileNotFoundError:
        raise
    except UnidentifiedImageError as exc:
        raise FormatError(f"unsupported or corrupt image file: {path}") from exc
    except OSError as exc:
        raise OSError(f"cannot read image {path}: {exc}") from exc
    if px.ndim == 2:
        px = px[:, :, None]
    px = px.astype(np.float32) / np.float32(255.0)
    if target is not None:
        px = _center_crop(px, target[0], target[1])
        px = _bilinear_resize(px, target[0], target[1])
    if channels == 3 and px.shape[2] == 1:
        px = np.repeat(px, 3, axis=2)
    elif channels == 1 and px.shape[2] == 3:
        px = px.mean(axis=2, keepdims=True, dtype=np.float32)
    return Image(np.clip(px, 0.0, 1.0))


def save_png(image: Image, path: str) -> None:
    """Write an image as 8-bit PNG (RGB, or grayscale for 1 channel)."""
    arr = np.round(image.pixels * 255.0).astype(np.uint8)
    if arr.shape[2] == 1:
        PILImage.fromarray(arr[:, :, 0], mode="L").save(path, format="PNG")
    else:
        PILImage.fromarray(arr, mode="RGB").save(path, format="PNG")


def save_pfm(saliency: SaliencyMap, path: str) -> None:
    """Persist a float map as grayscale PFM, little-endian, lossless.

    Header is ``Pf\\n{W} {H}\\n-1.0\\n``; scanlines are stored bottom-up
    per the PFM convention, hence the vertical flip.
    """
    vals = saliency.values
    h, w = vals.shape
    with open(path, "wb") as fh:
        fh.write(f"Pf\n{w} {h}\n-1.0\n".encode("ascii"))
        fh.write(np.flipud(vals).astype("<f4").tobytes())


def load_pfm(path: str) -> SaliencyMap:
    """Read a grayscale PFM written by :func:`save_pfm` (or any Pf file).

    Positive-scale (big-endian) files are accepted too; round-trips of
    our own little-endian output are bitwise exact.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) == 0:
        raise FormatError(f"empty PFM file: {path}")

    def next_token(pos: int) -> tuple[bytes, int]:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError(f"truncated PFM header: {path}")
        return data[start:pos], pos + 1

    magic, pos = next_token(0)
    if magic != b"Pf":
        raise FormatError(f"not a grayscale PFM (magic {magic!r}): {path}")
    try:
        wtok, pos = next_token(pos)
        htok, pos = next_token(pos)
        stok, pos = next_token(pos)
        w, h, scale = int(wtok), int(htok), float(stok)
    except (ValueError, FormatError) as exc:
        raise FormatError(f"malformed PFM header: {path}") from exc
    if w < 1 or h < 1 or scale == 0.0:
        raise FormatError(f"malformed PFM header values (w={w}, h={h}, scale={scale}): {path}")
    dtype = "<f4" if scale < 0 else ">f4"
    body = data[pos:]
    if len(body) < 4 * w * h:
        raise FormatError(f"PFM body too short (want {4 * w * h} bytes, have {len(body)}): {path}")
    vals = np.frombuffer(body[:4 * w * h], dtype=dtype).reshape(h, w)
    return SaliencyMap(np.flipud(vals).astype(np.float32))


def _build_colormap() -> np.ndarray:
    """Fixed 256-entry blue-to-red lookup table, float32 RGB rows.

    Piecewise-linear through blue, cyan, yellow, red with integer-rounded
    8-bit channels, so rendering is bit-reproducible everywhere.
    """
    anchors = np.array(
        [[0, 0, 255], [0, 255, 255], [255, 255, 0], [255, 0, 0]], dtype=np.float64
    )
    table = np.empty((256, 3), dtype=np.float64)
    segs = len(anchors) - 1
    for i in range(256):
        t = i / 255.0 * segs
        k = min(int(t), segs - 1)
        frac = t - k
        table[i] = np.round(anchors[k] * (1 - frac) + anchors[k + 1] * frac)
    return (table / 255.0).astype(np.float32)


COLORMAP_BLUE_RED = _build_colormap()


def render_overlay(image: Image, saliency: SaliencyMap, alpha: float) -> Image:
    """Alpha-blend a colorized saliency map over an image.

    The map is scaled by its own max |value| so the most negative pixel
    hits the blue end and the most positive hits red; a zero map renders
    the blue endpoint everywhere.  ``alpha`` 0 returns the image
    untouched, 1 returns pure heatmap.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ConfigError(f"alpha must lie in [0, 1], got {alpha}")
    if (image.height, image.width) != (saliency.height, saliency.width):
        raise ConfigError(
            f"image is {image.height}x{image.width} but saliency map is "
            f"{saliency.height}x{saliency.width}"
        )
    base = image.pixels
    if base.shape[2] == 1:
        base = np.repeat(base, 3, axis=2)
    peak = float(np.abs(saliency.values).max(initial=0.0))
    if peak == 0.0:
        idx = np.zeros(saliency.values.shape, dtype=np.intp)
    else:
        unit = saliency.values.astype(np.float64) / peak
        idx = np.clip(np.round((unit + 1.0) * 127.5), 0, 255).astype(np.intp)
    heat = COLORMAP_BLUE_RED[idx]
    blended = (1.0 - alpha) * base + alpha * heat
    return Image(np.clip(blended, 0.0, 1.0).astype(np.float32))


def ensure_dir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path
