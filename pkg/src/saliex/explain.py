"""Perturbation-based saliency for embedding recognizers.

The explainer occludes one image of a pair at a time with random
patch masks, scores each occluded variant against the counterpart's
unperturbed embedding, and correlates score with mask value per pixel.
Pixels whose occlusion drags the score down correlate positively
(similar-region evidence); pixels whose occlusion pushes the score up
correlate negatively (dissimilar regions).
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .embedders import Embedder, cosine_similarity
from .errors import ConfigError
from .masks import mask_batch
from .seeding import DEFAULT_SEED
from .types import Image, MaskGenConfig, MaskSet, SaliencyMap, split_saliency


@dataclass(frozen=True)
class ExplainConfig:
    """Knobs of one explanation run.

    ``matching_threshold`` gates regularization: when set, pairs whose
    unperturbed score reaches it are treated as matching and explained
    without the counterpart-blending term even if ``regularization`` is
    on.  Leave it None to let the flag rule alone.
    """

    mask_config: MaskGenConfig = field(default_factory=MaskGenConfig)
    seed: int = DEFAULT_SEED
    regularization: bool = False
    batch_size: int = 64
    workers: int = 1
    matching_threshold: float | None = None

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")


@dataclass(frozen=True)
class PairExplanation:
    """Signed maps for both images, their non-negative splits, and audit data.

    ``similar_* - dissimilar_*`` reconstructs the signed maps exactly;
    score lists hold the per-mask similarity readings that produced them.
    """

    signed_a: SaliencyMap
    signed_b: SaliencyMap
    similar_a: SaliencyMap
    dissimilar_a: SaliencyMap
    similar_b: SaliencyMap
    dissimilar_b: SaliencyMap
    pair_score: float
    scores_a: np.ndarray
    scores_b: np.ndarray
    regularized: bool = False


def pixelwise_pearson(scores: np.ndarray, masks: MaskSet | np.ndarray) -> SaliencyMap:
    """Correlate a score list against mask values, pixel by pixel.

    Output pixel (i, j) is the Pearson coefficient between the N scores
    and the N mask values at (i, j).  Zero variance on either side of a
    pixel's correlation yields 0 there (no evidence either way).
    """
    m = masks.masks if isinstance(masks, MaskSet) else np.asarray(masks)
    s = np.asarray(scores, dtype=np.float64).ravel()
    if m.ndim != 3:
        raise ConfigError(f"masks must be (N, H, W), got shape {m.shape}")
    n = m.shape[0]
    if s.shape[0] != n:
        raise ConfigError(f"{s.shape[0]} scores for {n} masks")
    if n < 2:
        raise ConfigError(f"insufficient samples: need at least 2 masks, got {n}")
    m64 = m.astype(np.float64)
    sum_m = m64.sum(axis=0)
    sum_mm = np.einsum("kij,kij->ij", m64, m64)
    sum_ms = np.einsum("kij,k->ij", m64, s)
    sum_s = s.sum()
    sum_ss = float(s @ s)
    return _finish_pearson(n, sum_m, sum_mm, sum_ms, sum_s, sum_ss)


def _finish_pearson(n: int, sum_m, sum_mm, sum_ms, sum_s: float, sum_ss: float) -> SaliencyMap:
    cov = n * sum_ms - sum_m * sum_s
    var_m = np.maximum(n * sum_mm - sum_m * sum_m, 0.0)
    var_s = max(n * sum_ss - sum_s * sum_s, 0.0)
    denom = np.sqrt(var_m * var_s)
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(denom > 0.0, cov / np.where(denom > 0.0, denom, 1.0), 0.0)
    return SaliencyMap(np.clip(r, -1.0, 1.0).astype(np.float32))


def regularization_weight(base_score: float) -> float:
    """Blend weight for the counterpart-filled variant, in [-1, 0].

    Derived from the pair's unperturbed score: 1 maps to 0 (no
    correction needed), 0 maps to -1 (full counter-evidence).  Scores
    outside [0, 1] are clamped first, with a warning, since embeddings
    of natural images score non-negative in practice.
    """
    if base_score < 0.0 or base_score > 1.0:
        warnings.warn(
            f"pair score {base_score:.6g} outside [0, 1]; clamping for the "
            "regularization weight", RuntimeWarning, stacklevel=2,
        )
        base_score = min(max(base_score, 0.0), 1.0)
    return (base_score - 1.0) / (base_score + 1.0)


def blend_counterpart(image: Image, counterpart: Image, mask: np.ndarray) -> Image:
    """Keep the masked-out area of ``image``, fill the rest from ``counterpart``.

    The occluded region (low mask values) retains the original pixels'
    complement weighting: output = image * (1 - mask) + counterpart * mask.
    """
    m = np.asarray(mask, dtype=np.float32)[:, :, None]
    if m.shape[:2] != (image.height, image.width):
        raise ConfigError(f"mask shape {m.shape[:2]} does not match image "
                          f"{image.height}x{image.width}")
    blended = image.pixels * (1.0 - m) + counterpart.pixels * m
    return Image(np.clip(blended, 0.0, 1.0))


def regularized_score(image: Image, counterpart: Image, mask: np.ndarray,
                      embedder: Embedder, base_score: float) -> float:
    """Score one occluded variant with the counterpart-blend correction.

    Returns score(occluded image, counterpart) plus the regularization
    weight times score(blend, counterpart), where the blend keeps the
    occluded area of ``image`` and takes everything else from
    ``counterpart``.
    """
    lam = regularization_weight(base_score)
    masked = apply_mask_pixels(image.pixels, np.asarray(mask, dtype=np.float32))
    blended = blend_counterpart(image, counterpart, mask).pixels
    batch = np.stack([masked, blended, counterpart.pixels])
    emb = embedder.embed_batch(batch, degenerate="zero")
    ref = emb[2]
    return float(np.clip(emb[0] @ ref, -1.0, 1.0) + lam * np.clip(emb[1] @ ref, -1.0, 1.0))


def apply_mask_pixels(pixels: np.ndarray, masks: np.ndarray) -> np.ndarray:
    """Broadcast-multiply (H, W, C) pixels by (..., H, W) masks."""
    return pixels * masks[..., None]


class _SideAccumulator:
    """Streaming per-pixel correlation state for one image of the pair."""

    def __init__(self, height: int, width: int):
        self.sum_ms = np.zeros((height, width), dtype=np.float64)
        self.sum_s = 0.0
        self.sum_ss = 0.0
        self.scores: list[np.ndarray] = []

    def merge(self, batch_sum_ms: np.ndarray, batch_scores: np.ndarray) -> None:
        self.sum_ms += batch_sum_ms
        self.sum_s += float(batch_scores.sum())
        self.sum_ss += float(batch_scores @ batch_scores)
        self.scores.append(batch_scores)


def _batch_terms(masks: np.ndarray, pixels_a: np.ndarray, pixels_b: np.ndarray,
                 emb_a: np.ndarray, emb_b: np.ndarray, embedder: Embedder,
                 lam: float | None) -> tuple[np.ndarray, ...]:
    """Compute one mask batch's contribution to all accumulators."""
    m64 = masks.astype(np.float64)
    sum_m = m64.sum(axis=0)
    sum_mm = np.einsum("kij,kij->ij", m64, m64)

    masked_a = apply_mask_pixels(pixels_a, masks)
    masked_b = apply_mask_pixels(pixels_b, masks)
    scores_a = np.clip(embedder.embed_batch(masked_a, degenerate="zero") @ emb_b, -1.0, 1.0)
    scores_b = np.clip(embedder.embed_batch(masked_b, degenerate="zero") @ emb_a, -1.0, 1.0)
    scores_a = scores_a.astype(np.float64)
    scores_b = scores_b.astype(np.float64)

    if lam is not None:
        inv = 1.0 - masks
        blend_a = apply_mask_pixels(pixels_a, inv) + apply_mask_pixels(pixels_b, masks)
        blend_b = apply_mask_pixels(pixels_b, inv) + apply_mask_pixels(pixels_a, masks)
        reg_a = np.clip(embedder.embed_batch(blend_a, degenerate="zero") @ emb_b, -1.0, 1.0)
        reg_b = np.clip(embedder.embed_batch(blend_b, degenerate="zero") @ emb_a, -1.0, 1.0)
        scores_a = scores_a + lam * reg_a.astype(np.float64)
        scores_b = scores_b + lam * reg_b.astype(np.float64)

    return sum_m, sum_mm, np.einsum("kij,k->ij", m64, scores_a), scores_a, \
        np.einsum("kij,k->ij", m64, scores_b), scores_b


def explain_pair(image_a: Image, image_b: Image, embedder: Embedder,
                 cfg: ExplainConfig) -> PairExplanation:
    """Produce signed saliency maps for both images of a pair.

    Reference embeddings are computed once from the unperturbed images.
    Each mask is applied to one image at a time, with the counterpart
    left untouched; the same mask set serves both sides.  Mask batches
    may be embedded by parallel workers, but partial sums are merged in
    mask-index order, so results do not depend on the worker count.
    """
    if (image_a.height, image_a.width, image_a.channels) != \
            (image_b.height, image_b.width, image_b.channels):
        raise ConfigError(
            f"pair images differ in shape: {image_a.pixels.shape} vs {image_b.pixels.shape}"
        )
    mk = cfg.mask_config
    if mk.num_masks < 2:
        raise ConfigError(f"insufficient samples: need at least 2 masks, got {mk.num_masks}")
    height, width = image_a.height, image_a.width
    dims = (height, width)

    emb = embedder.embed_batch(np.stack([image_a.pixels, image_b.pixels]))
    emb_a = emb[0].astype(np.float64)
    emb_b = emb[1].astype(np.float64)
    pair_score = float(np.clip(emb_a @ emb_b, -1.0, 1.0))

    regularize = cfg.regularization
    if regularize and cfg.matching_threshold is not None \
            and pair_score >= cfg.matching_threshold:
        regularize = False
    lam = regularization_weight(pair_score) if regularize else None

    starts = list(range(0, mk.num_masks, cfg.batch_size))

    def run_batch(start: int):
        masks = mask_batch(mk, dims, cfg.seed, start, min(cfg.batch_size, mk.num_masks - start))
        return _batch_terms(masks, image_a.pixels, image_b.pixels,
                            emb_a, emb_b, embedder, lam)

    sum_m = np.zeros(dims, dtype=np.float64)
    sum_mm = np.zeros(dims, dtype=np.float64)
    side_a = _SideAccumulator(height, width)
    side_b = _SideAccumulator(height, width)

    # pool.map yields in submission order, so the merge below runs in
    # mask-index order regardless of worker count: identical arithmetic,
    # identical result, threaded or not.
    if cfg.workers > 1:
        pool = ThreadPoolExecutor(max_workers=cfg.workers)
        results = pool.map(run_batch, starts)
    else:
        pool = None
        results = map(run_batch, starts)
    try:
        for bm, bmm, bms_a, bs_a, bms_b, bs_b in results:
            sum_m += bm
            sum_mm += bmm
            side_a.merge(bms_a, bs_a)
            side_b.merge(bms_b, bs_b)
    finally:
        if pool is not None:
            pool.shutdown()

    n = mk.num_masks
    signed_a = _finish_pearson(n, sum_m, sum_mm, side_a.sum_ms, side_a.sum_s, side_a.sum_ss)
    signed_b = _finish_pearson(n, sum_m, sum_mm, side_b.sum_ms, side_b.sum_s, side_b.sum_ss)
    sim_a, dis_a = split_saliency(signed_a)
    sim_b, dis_b = split_saliency(signed_b)
    return PairExplanation(
        signed_a=signed_a, signed_b=signed_b,
        similar_a=sim_a, dissimilar_a=dis_a, similar_b=sim_b, dissimilar_b=dis_b,
        pair_score=pair_score,
        scores_a=np.concatenate(side_a.scores),
        scores_b=np.concatenate(side_b.scores),
        regularized=regularize,
    )


@dataclass(frozen=True)
class RankedMatch:
    """One gallery hit: its rank order, manifest row, score, and maps."""

    rank: int
    gallery_index: int
    identity: str
    score: float
    explanation: PairExplanation


def explain_identification(probe: Image, gallery: list[tuple[Image, str]], top_k: int,
                           embedder: Embedder, cfg: ExplainConfig) -> list[RankedMatch]:
    """Rank a gallery against a probe and explain the top-K hits.

    Scores are cosine between the probe embedding and each gallery
    embedding; ties rank the lower gallery index first.  Each returned
    match carries a full pair explanation with the probe on side A, so
    ``explanation.signed_b`` is the gallery-side map presented to users
    and ``signed_a`` feeds probe-map averaging for evaluation.
    """
    if len(gallery) == 0:
        raise ConfigError("gallery is empty")
    if not 1 <= top_k <= len(gallery):
        raise ConfigError(f"top_k must be in [1, {len(gallery)}], got {top_k}")
    batch = np.stack([probe.pixels] + [img.pixels for img, _ in gallery])
    emb = embedder.embed_batch(batch).astype(np.float64)
    scores = np.clip(emb[1:] @ emb[0], -1.0, 1.0)
    order = np.argsort(-scores, kind="stable")[:top_k]
    matches = []
    for rank, idx in enumerate(order, start=1):
        idx = int(idx)
        explanation = explain_pair(probe, gallery[idx][0], embedder, cfg)
        matches.append(RankedMatch(rank=rank, gallery_index=idx,
                                   identity=gallery[idx][1],
                                   score=float(scores[idx]), explanation=explanation))
    return matches


def average_probe_maps(matches: list[RankedMatch]) -> SaliencyMap:
    """Pixelwise mean of the probe-side signed maps across ranked matches."""
    if len(matches) == 0:
        raise ConfigError("no matches to average")
    stack = np.stack([m.explanation.signed_a.values for m in matches])
    return SaliencyMap(stack.mean(axis=0).astype(np.float32))
