"""Signed visual saliency for black-box embedding recognizers.

Explains why a recognizer scored an image pair the way it did by
occluding random patches, correlating occlusion with score per pixel,
and splitting the signed result into similar/dissimilar evidence maps.
Ships deletion/insertion scoring, a model-randomization sanity check,
two built-in toy embedders, and a wire protocol for external models.
"""

from .errors import (ConfigError, DegenerateEmbeddingError, FormatError,
                     SaliexError, TransportError)
from .types import Image, MaskGenConfig, MaskSet, SaliencyMap, split_saliency
from .seeding import DEFAULT_SEED, derive_seed, indexed_rng
from .masks import apply_mask, generate_masks, mask_batch
from .embedders import (BlockAveragePool, Embedder, ExternalEmbedder,
                        RandomProjection, cosine_similarity, embed, make_embedder)
from .explain import (ExplainConfig, PairExplanation, RankedMatch,
                      average_probe_maps, blend_counterpart, explain_identification,
                      explain_pair, pixelwise_pearson, regularization_weight,
                      regularized_score)
from .evaluation import (EvalCurve, EvalPair, PairEntry, PairList, auc,
                         best_threshold, blur_saliency, calibrate_threshold,
                         delete_pixels, identification_curve, insert_pixels,
                         load_gallery_manifest, load_pair_list, random_saliency_map,
                         rank_pixels, save_pair_list, verification_curve,
                         verification_metric)
from .imaging import load_image, load_pfm, render_overlay, save_pfm, save_png
from .sanity import SanityReport, TrialResult, sanity_check
from .toyset import PlantedPair, ToySet, ToySetConfig, build_toyset, write_toyset

__version__ = "0.1.0"

__all__ = [
    "BlockAveragePool", "ConfigError", "DEFAULT_SEED", "DegenerateEmbeddingError",
    "Embedder", "EvalCurve", "EvalPair", "ExplainConfig", "ExternalEmbedder",
    "FormatError", "Image", "MaskGenConfig", "MaskSet", "PairEntry",
    "PairExplanation", "PairList", "PlantedPair", "RandomProjection", "RankedMatch",
    "SaliencyMap", "SaliexError", "SanityReport", "ToySet", "ToySetConfig",
    "TransportError", "TrialResult", "apply_mask", "auc", "average_probe_maps",
    "best_threshold", "blend_counterpart", "blur_saliency", "calibrate_threshold",
    "cosine_similarity", "delete_pixels", "derive_seed", "embed",
    "explain_identification", "explain_pair", "generate_masks",
    "identification_curve", "indexed_rng", "insert_pixels", "load_gallery_manifest",
    "load_image", "load_pair_list", "load_pfm", "make_embedder", "mask_batch",
    "pixelwise_pearson", "random_saliency_map", "rank_pixels",
    "regularization_weight", "regularized_score", "render_overlay",
    "sanity_check", "save_pair_list", "save_pfm", "save_png", "split_saliency",
    "verification_curve", "verification_metric", "write_toyset",
]
