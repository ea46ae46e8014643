"""Deletion/Insertion scoring of saliency maps.

A good similarity map, deleted first, should collapse verification
accuracy quickly (low deletion AUC) and, inserted first into a blank
image, should restore it quickly (high insertion AUC).  Curves sample
fractions k/n; the verification metric holds one pre-calibrated score
threshold fixed across all perturbation levels so curve changes reflect
saliency quality only.
"""

from __future__ import annotations

import math
import os
import warnings
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.ndimage import gaussian_filter1d

from .embedders import Embedder
from .errors import ConfigError, FormatError
from .types import Image, SaliencyMap, split_saliency

MODES = ("deletion", "insertion")
POLARITIES = ("similarity", "dissimilarity")
DEFAULT_BLUR_SIGMA = 4.0
DEFAULT_STEPS = 20


# ---------------------------------------------------------------- pair lists

@dataclass(frozen=True)
class PairEntry:
    path_a: str
    path_b: str
    matching: bool


@dataclass(frozen=True)
class PairList:
    """Verification pair file: ``path_a<TAB>path_b<TAB>{1|0}`` per line."""

    entries: tuple[PairEntry, ...]

    def __post_init__(self):
        if len(self.entries) == 0:
            raise ConfigError("pair list is empty")

    def __len__(self) -> int:
        return len(self.entries)


def load_pair_list(path: str) -> PairList:
    entries = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3 or parts[2] not in ("0", "1"):
                raise FormatError(
                    f"{path}:{lineno}: expected 'path_a<TAB>path_b<TAB>{{1|0}}', got {line!r}"
                )
            entries.append(PairEntry(parts[0], parts[1], parts[2] == "1"))
    if not entries:
        raise FormatError(f"{path}: no pair entries found")
    return PairList(tuple(entries))


def save_pair_list(pairs: PairList, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for e in pairs.entries:
            fh.write(f"{e.path_a}\t{e.path_b}\t{1 if e.matching else 0}\n")


def load_gallery_manifest(path: str) -> list[tuple[str, str]]:
    """Parse ``path<TAB>identity`` lines."""
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise FormatError(f"{path}:{lineno}: expected 'path<TAB>identity', got {line!r}")
            rows.append((parts[0], parts[1]))
    if not rows:
        raise FormatError(f"{path}: no manifest entries found")
    return rows


@dataclass(frozen=True)
class EvalPair:
    """One loaded verification pair."""

    image_a: Image
    image_b: Image
    matching: bool


def load_eval_pairs(pairs: PairList, target: tuple[int, int] | None = None,
                    channels: int = 3, base_dir: str | None = None) -> list[EvalPair]:
    """Load every entry's images; relative paths resolve under base_dir."""
    from .imaging import load_image

    def resolve(path: str) -> str:
        if base_dir is not None and not os.path.isabs(path):
            return os.path.join(base_dir, path)
        return path

    return [
        EvalPair(load_image(resolve(e.path_a), target, channels),
                 load_image(resolve(e.path_b), target, channels), e.matching)
        for e in pairs.entries
    ]


# ------------------------------------------------------------------- curves

@dataclass(frozen=True)
class EvalCurve:
    """Metric values at fractions k/n plus their rectangle-rule AUC."""

    fractions: np.ndarray
    values: np.ndarray
    auc: float

    def __post_init__(self):
        fr = np.asarray(self.fractions, dtype=np.float64)
        vals = np.asarray(self.values, dtype=np.float64)
        if fr.ndim != 1 or fr.shape != vals.shape or fr.size == 0:
            raise ConfigError("curve fractions/values must be equal-length non-empty 1-D arrays")
        if not np.all(np.diff(fr) > 0):
            raise ConfigError("curve fractions must be strictly increasing")
        if vals.min() < -1e-12 or vals.max() > 1 + 1e-12:
            raise ConfigError("curve values must lie in [0, 1]")
        if not -1e-12 <= self.auc <= 1 + 1e-12:
            raise ConfigError("curve auc must lie in [0, 1]")
        fr.setflags(write=False)
        vals.setflags(write=False)
        object.__setattr__(self, "fractions", fr)
        object.__setattr__(self, "values", vals)


def auc(values: Sequence[float]) -> float:
    """Rectangle-rule area: the arithmetic mean of the sampled values."""
    vals = np.asarray(values, dtype=np.float64)
    if vals.size == 0:
        raise ConfigError("auc of an empty value list")
    return float(vals.mean())


def write_curve_csv(curve: EvalCurve, path: str) -> None:
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["fraction", "value"])
        for f, v in zip(curve.fractions, curve.values):
            writer.writerow([f"{f:.6f}", f"{v:.6f}"])


# ------------------------------------------------------- map preprocessing

def blur_saliency(saliency: SaliencyMap, sigma: float) -> SaliencyMap:
    """Gaussian-smooth a map; sigma 0 is the identity.

    Separable convolution with a kernel of radius ceil(3*sigma),
    mirror-extended at the borders, so a constant map passes through
    unchanged and interior mass is preserved.
    """
    if sigma < 0:
        raise ConfigError(f"blur sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return saliency
    radius = math.ceil(3 * sigma)
    vals = saliency.values.astype(np.float64)
    vals = gaussian_filter1d(vals, sigma, axis=0, mode="mirror", radius=radius)
    vals = gaussian_filter1d(vals, sigma, axis=1, mode="mirror", radius=radius)
    return SaliencyMap(np.clip(vals, -1.0, 1.0).astype(np.float32))


def rank_pixels(saliency: SaliencyMap) -> np.ndarray:
    """Flat row-major pixel indices sorted by saliency, descending.

    Equal values keep row-major order, so the ranking is deterministic;
    the result is always a permutation of all H*W indices.
    """
    flat = saliency.values.ravel()
    return np.argsort(-flat, kind="stable")


def _modified_count(fraction: float, total: int) -> int:
    if not 0.0 <= fraction <= 1.0:
        raise ConfigError(f"fraction must lie in [0, 1], got {fraction}")
    return int(round(fraction * total))


def _delete_flat(pixels: np.ndarray, order: np.ndarray, count: int) -> np.ndarray:
    out = pixels.copy()
    out.reshape(-1, pixels.shape[2])[order[:count]] = 0.0
    return out


def _insert_flat(base: np.ndarray, source: np.ndarray, order: np.ndarray,
                 count: int) -> np.ndarray:
    out = base.copy()
    flat_out = out.reshape(-1, base.shape[2])
    flat_src = source.reshape(-1, source.shape[2])
    flat_out[order[:count]] = flat_src[order[:count]]
    return out


def _check_order(order: np.ndarray, total: int) -> np.ndarray:
    order = np.asarray(order)
    if order.shape != (total,) or not np.array_equal(np.sort(order), np.arange(total)):
        raise ConfigError("pixel order must be a permutation of all H*W pixel indices")
    return order


def delete_pixels(image: Image, order: np.ndarray, fraction: float) -> Image:
    """Zero the first round(fraction * H * W) ranked pixels, all channels."""
    order = _check_order(order, image.height * image.width)
    count = _modified_count(fraction, order.size)
    return Image(_delete_flat(image.pixels, order, count))


def insert_pixels(base: Image | None, source: Image, order: np.ndarray,
                  fraction: float) -> Image:
    """Copy the first round(fraction * H * W) ranked pixels into a base.

    ``base`` None means the blank (all-zero) image, the canonical
    insertion start.  Deletion and insertion at the same fraction
    partition the pixels: insert(blank) + delete == source, exactly.
    """
    order = _check_order(order, source.height * source.width)
    count = _modified_count(fraction, order.size)
    if base is None:
        base_px = np.zeros_like(source.pixels)
    else:
        if base.pixels.shape != source.pixels.shape:
            raise ConfigError(
                f"base shape {base.pixels.shape} does not match source {source.pixels.shape}"
            )
        base_px = base.pixels
    return Image(_insert_flat(base_px, source.pixels, order, count))


# ---------------------------------------------------------------- threshold

def best_threshold(scores: Sequence[float], matching: Sequence[bool]) -> tuple[float, float]:
    """Accuracy-maximizing decision threshold (score >= t means matching).

    Candidates are the midpoints between consecutive distinct sorted
    scores plus one sentinel beyond each end; the smallest candidate
    achieving the maximum accuracy wins.  Needs both classes present.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(matching, dtype=bool)
    if s.size == 0 or s.shape != y.shape:
        raise ConfigError("scores and labels must be equal-length and non-empty")
    if y.all() or not y.any():
        raise ConfigError("threshold calibration needs both matching and non-matching pairs")
    distinct = np.unique(s)
    candidates = [distinct[0] - 1.0]
    candidates.extend((distinct[:-1] + distinct[1:]) / 2.0)
    candidates.append(distinct[-1] + 1.0)
    best_t, best_acc = None, -1.0
    for t in candidates:
        acc = float(((s >= t) == y).mean())
        if acc > best_acc:
            best_t, best_acc = float(t), acc
    return best_t, best_acc


def calibrate_threshold(pairs: Sequence[EvalPair], embedder: Embedder,
                        batch_size: int = 64) -> float:
    """Fix the verification threshold from unmodified images.

    The returned threshold is held constant for every perturbation
    level, so accuracy changes along a curve are attributable to the
    pixels removed or inserted, not to threshold drift.
    """
    if len(pairs) == 0:
        raise ConfigError("cannot calibrate on an empty pair list")
    scores = pair_scores(pairs, embedder, batch_size)
    threshold, _ = best_threshold(scores, [p.matching for p in pairs])
    return threshold


def _embed_arrays(embedder: Embedder, arrays: list[np.ndarray], batch_size: int) -> np.ndarray:
    out = []
    for start in range(0, len(arrays), batch_size):
        chunk = np.stack(arrays[start:start + batch_size])
        out.append(embedder.embed_batch(chunk, degenerate="zero"))
    return np.concatenate(out, axis=0).astype(np.float64)


def pair_scores(pairs: Sequence[EvalPair], embedder: Embedder,
                batch_size: int = 64) -> np.ndarray:
    """Cosine score of each pair's unmodified images."""
    arrays = []
    for p in pairs:
        arrays.append(p.image_a.pixels)
        arrays.append(p.image_b.pixels)
    emb = _embed_arrays(embedder, arrays, batch_size)
    return np.clip(np.einsum("ij,ij->i", emb[0::2], emb[1::2]), -1.0, 1.0)


# ------------------------------------------------------------- verification

def random_saliency_map(height: int, width: int, rng: np.random.Generator) -> SaliencyMap:
    """Uniform signed noise map, the standard do-nothing baseline."""
    return SaliencyMap(rng.uniform(-1.0, 1.0, (height, width)).astype(np.float32))


def _polar_part(signed: SaliencyMap, which: str) -> SaliencyMap:
    plus, minus = split_saliency(signed)
    return plus if which == "similarity" else minus


def verification_curve(pairs: Sequence[EvalPair],
                       maps: Sequence[tuple[SaliencyMap, SaliencyMap]],
                       embedder: Embedder, *,
                       n: int = DEFAULT_STEPS,
                       mode: str = "deletion",
                       which: str = "similarity",
                       threshold: float | None = None,
                       sigma: float = DEFAULT_BLUR_SIGMA,
                       batch_size: int = 64) -> EvalCurve:
    """Deletion/insertion curve over a verification pair set.

    ``maps[i]`` holds the signed maps for pair i's two images; the
    polarity named by ``which`` is split out, blurred, and ranked.
    Similarity maps are scored on the matching pairs (accuracy = score
    above threshold), dissimilarity maps on the non-matching pairs
    (accuracy = score below).  Both images of a pair are modified, each
    by its own map.  ``threshold`` None calibrates on the full pair
    list's unmodified images first.
    """
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")
    if which not in POLARITIES:
        raise ConfigError(f"which must be one of {POLARITIES}, got {which!r}")
    if n < 1:
        raise ConfigError(f"step count must be >= 1, got {n}")
    if len(maps) != len(pairs):
        raise ConfigError(f"{len(maps)} map pairs for {len(pairs)} image pairs")
    if threshold is None:
        threshold = calibrate_threshold(pairs, embedder, batch_size)

    want_matching = which == "similarity"
    selected = [i for i, p in enumerate(pairs) if p.matching == want_matching]
    if not selected:
        raise ConfigError(f"no {'matching' if want_matching else 'non-matching'} pairs "
                          f"to evaluate {which} maps on")

    sides = []
    for i in selected:
        pair = pairs[i]
        for image, signed in ((pair.image_a, maps[i][0]), (pair.image_b, maps[i][1])):
            if (signed.height, signed.width) != (image.height, image.width):
                raise ConfigError(f"map shape {signed.values.shape} does not match "
                                  f"image {image.pixels.shape[:2]} in pair {i}")
            order = rank_pixels(blur_saliency(_polar_part(signed, which), sigma))
            sides.append((image.pixels, order))

    total = sides[0][0].shape[0] * sides[0][0].shape[1]
    fractions = np.arange(1, n + 1, dtype=np.float64) / n
    values = np.empty(n, dtype=np.float64)
    for k, fraction in enumerate(fractions):
        count = _modified_count(float(fraction), total)
        arrays = []
        for pixels, order in sides:
            if mode == "deletion":
                arrays.append(_delete_flat(pixels, order, count))
            else:
                arrays.append(_insert_flat(np.zeros_like(pixels), pixels, order, count))
        emb = _embed_arrays(embedder, arrays, batch_size)
        scores = np.clip(np.einsum("ij,ij->i", emb[0::2], emb[1::2]), -1.0, 1.0)
        correct = scores >= threshold if want_matching else scores < threshold
        values[k] = float(correct.mean())
    return EvalCurve(fractions, values, auc(values))


MapSource = Mapping[str, SaliencyMap] | Callable[[str], SaliencyMap]


def _resolve_map(maps: MapSource, path: str) -> SaliencyMap:
    try:
        if callable(maps):
            return maps(path)
        return maps[path]
    except (KeyError, FileNotFoundError) as exc:
        raise FormatError(f"no saliency map available for image {path!r}") from exc


def verification_metric(pairs: PairList, maps: MapSource, embedder: Embedder, *,
                        n: int = DEFAULT_STEPS,
                        mode: str = "deletion",
                        which: str = "similarity",
                        threshold: float | None = None,
                        sigma: float = DEFAULT_BLUR_SIGMA,
                        target: tuple[int, int] | None = None,
                        base_dir: str | None = None,
                        batch_size: int = 64) -> EvalCurve:
    """File-based wrapper: loads pair images and per-image signed maps.

    ``maps`` maps an image path to its signed saliency map (mapping or
    callable); a missing entry raises naming the offending image.
    Relative image paths resolve under ``base_dir``; map lookups always
    receive the path exactly as written in the pair list.
    """
    loaded = load_eval_pairs(pairs, target, base_dir=base_dir)
    signed = [(_resolve_map(maps, e.path_a), _resolve_map(maps, e.path_b))
              for e in pairs.entries]
    return verification_curve(loaded, signed, embedder, n=n, mode=mode, which=which,
                              threshold=threshold, sigma=sigma, batch_size=batch_size)


# ----------------------------------------------------------- identification

def identification_curve(probes: Sequence[tuple[Image, str]],
                         gallery: Sequence[tuple[Image, str]],
                         probe_maps: Sequence[SaliencyMap],
                         embedder: Embedder, *,
                         n: int = DEFAULT_STEPS,
                         rank_n: int = 1,
                         mode: str = "deletion",
                         sigma: float = DEFAULT_BLUR_SIGMA,
                         batch_size: int = 64) -> tuple[EvalCurve, list[int]]:
    """Rank-N rate vs fraction of probe pixels removed or inserted.

    ``probe_maps[i]`` is probe i's averaged signed map (see
    :func:`saliex.explain.average_probe_maps`); it is ranked signed and
    descending, so match-supporting evidence goes first.  Only the probe
    is modified; the gallery stays untouched.  Probes whose identity is
    absent from the gallery are excluded and their indices returned.
    """
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")
    if n < 1 or rank_n < 1:
        raise ConfigError("step count and rank_n must be >= 1")
    if len(gallery) == 0:
        raise ConfigError("gallery is empty")
    if len(probe_maps) != len(probes):
        raise ConfigError(f"{len(probe_maps)} probe maps for {len(probes)} probes")

    gallery_ids = [identity for _, identity in gallery]
    known = set(gallery_ids)
    excluded = [i for i, (_, identity) in enumerate(probes) if identity not in known]
    if excluded:
        warnings.warn(
            f"{len(excluded)} probe(s) excluded: identity not in gallery "
            f"(indices {excluded})", RuntimeWarning, stacklevel=2,
        )
    included = [i for i in range(len(probes)) if i not in set(excluded)]
    if not included:
        raise ConfigError("no probe identity appears in the gallery")

    gal_emb = _embed_arrays(embedder, [img.pixels for img, _ in gallery], batch_size)
    gal_ids = np.array(gallery_ids)
    orders = []
    for i in included:
        image, _ = probes[i]
        m = probe_maps[i]
        if (m.height, m.width) != (image.height, image.width):
            raise ConfigError(f"probe map {i} shape {m.values.shape} does not match "
                              f"probe image {image.pixels.shape[:2]}")
        orders.append(rank_pixels(blur_saliency(m, sigma)))

    total = probes[included[0]][0].height * probes[included[0]][0].width
    fractions = np.arange(1, n + 1, dtype=np.float64) / n
    values = np.empty(n, dtype=np.float64)
    top = min(rank_n, len(gallery))
    for k, fraction in enumerate(fractions):
        count = _modified_count(float(fraction), total)
        arrays = []
        for idx, i in enumerate(included):
            pixels = probes[i][0].pixels
            if mode == "deletion":
                arrays.append(_delete_flat(pixels, orders[idx], count))
            else:
                arrays.append(_insert_flat(np.zeros_like(pixels), pixels, orders[idx], count))
        emb = _embed_arrays(embedder, arrays, batch_size)
        scores = emb @ gal_emb.T
        hits = 0
        for idx, i in enumerate(included):
            best = np.argsort(-scores[idx], kind="stable")[:top]
            if probes[i][1] in gal_ids[best]:
                hits += 1
        values[k] = hits / len(included)
    return EvalCurve(fractions, values, auc(values)), excluded
