"""Model-randomization sanity check.

An explanation method that actually reads the model should produce
useful maps (better-than-random deletion ranking) for a structured
embedder, and uninformative maps for an untrained random-projection
embedder.  Both conditions are scored with the same statistic: the
deletion-AUC gap between random ranking and the method's ranking.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .embedders import BlockAveragePool, Embedder, RandomProjection
from .errors import ConfigError
from .evaluation import (DEFAULT_BLUR_SIGMA, EvalPair, PairList, calibrate_threshold,
                         load_eval_pairs, random_saliency_map, verification_curve)
from .explain import ExplainConfig, explain_pair
from .seeding import derive_seed
from .types import SaliencyMap

MapFn = Callable[[EvalPair, Embedder, ExplainConfig], tuple[SaliencyMap, SaliencyMap]]


def correlation_maps(pair: EvalPair, embedder: Embedder,
                     cfg: ExplainConfig) -> tuple[SaliencyMap, SaliencyMap]:
    """Default map source: the perturbation explainer's signed maps."""
    ex = explain_pair(pair.image_a, pair.image_b, embedder, cfg)
    return ex.signed_a, ex.signed_b


@dataclass(frozen=True)
class TrialResult:
    trial: int
    structured_gap: float
    randomized_gap: float
    structured_pass: bool
    randomized_pass: bool

    @property
    def passed(self) -> bool:
        return self.structured_pass and self.randomized_pass


@dataclass(frozen=True)
class SanityReport:
    """Aggregate verdict over independent randomization trials.

    The headline statistics are the mean gaps across trials; the noise
    floor applies to the mean, so each trial's diagnostic flag is
    checked against the sqrt(trials)-scaled floor (single-trial gaps
    are that much noisier than their average).
    """

    trials: tuple[TrialResult, ...]
    margin: float
    noise_floor: float

    @property
    def structured_gap(self) -> float:
        return float(np.mean([t.structured_gap for t in self.trials]))

    @property
    def randomized_gap(self) -> float:
        return float(np.mean([t.randomized_gap for t in self.trials]))

    @property
    def passed(self) -> bool:
        return (self.structured_gap > self.margin
                and abs(self.randomized_gap) <= self.noise_floor)

    def to_dict(self) -> dict:
        # plain python scalars only, so the dict is always JSON-ready
        return {
            "margin": float(self.margin),
            "noise_floor": float(self.noise_floor),
            "structured_gap": self.structured_gap,
            "randomized_gap": self.randomized_gap,
            "passed": bool(self.passed),
            "trials": [
                {
                    "trial": int(t.trial),
                    "structured_gap": float(t.structured_gap),
                    "randomized_gap": float(t.randomized_gap),
                    "structured_pass": bool(t.structured_pass),
                    "randomized_pass": bool(t.randomized_pass),
                    "passed": bool(t.passed),
                }
                for t in self.trials
            ],
        }

    def save_json(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)


def _gap(pairs: Sequence[EvalPair], maps: list[tuple[SaliencyMap, SaliencyMap]],
         embedder: Embedder, trial_seed: int, *, n_steps: int, sigma: float,
         random_rankings: int, batch_size: int) -> float:
    """Deletion AUC of random ranking minus deletion AUC of the method."""
    threshold = calibrate_threshold(pairs, embedder, batch_size)
    auc_method = verification_curve(
        pairs, maps, embedder, n=n_steps, mode="deletion", which="similarity",
        threshold=threshold, sigma=sigma, batch_size=batch_size,
    ).auc
    random_aucs = []
    height = pairs[0].image_a.height
    width = pairs[0].image_a.width
    for r in range(random_rankings):
        rng = np.random.default_rng(derive_seed(trial_seed, "sanity-random-maps", r))
        rand_maps = [(random_saliency_map(height, width, rng),
                      random_saliency_map(height, width, rng)) for _ in pairs]
        random_aucs.append(verification_curve(
            pairs, rand_maps, embedder, n=n_steps, mode="deletion", which="similarity",
            threshold=threshold, sigma=sigma, batch_size=batch_size,
        ).auc)
    return float(np.mean(random_aucs) - auc_method)


def sanity_check(pairs: Sequence[EvalPair] | PairList, cfg: ExplainConfig,
                 trials: int = 10, *,
                 margin: float = 0.05,
                 noise_floor: float = 0.02,
                 structured_grid: int = 8,
                 randomized_dim: int = 128,
                 n_steps: int = 20,
                 sigma: float = DEFAULT_BLUR_SIGMA,
                 random_rankings: int = 3,
                 map_fn: MapFn = correlation_maps,
                 batch_size: int = 64,
                 target: tuple[int, int] | None = None) -> SanityReport:
    """Run the randomization check over independent trials.

    Per trial: a fresh randomly seeded projection embedder and the
    structured block-average embedder each explain every pair, and each
    embedder's deletion-AUC gap against random ranking is measured on
    its own calibrated threshold.  The report passes when the mean
    structured gap exceeds ``margin`` while the mean randomized gap's
    magnitude stays within ``noise_floor``.  Margins are
    pilot-calibrated defaults, not universal constants.
    """
    if trials < 1:
        raise ConfigError(f"trials must be >= 1, got {trials}")
    if isinstance(pairs, PairList):
        pairs = load_eval_pairs(pairs, target)
    pairs = list(pairs)
    if not pairs:
        raise ConfigError("sanity check needs a non-empty pair list")

    # single-trial diagnostic bound: scale the mean's floor back up
    trial_floor = noise_floor * float(np.sqrt(trials))
    results = []
    for t in range(trials):
        trial_seed = derive_seed(cfg.seed, "sanity-trial", t)
        trial_cfg = replace(cfg, seed=derive_seed(trial_seed, "sanity-masks", 0))
        structured = BlockAveragePool(structured_grid)
        randomized = RandomProjection(
            dim=randomized_dim,
            weight_seed=derive_seed(trial_seed, "sanity-random-model", 0),
        )
        gaps = {}
        for label, embedder in (("structured", structured), ("randomized", randomized)):
            maps = [map_fn(pair, embedder, trial_cfg) for pair in pairs]
            gaps[label] = _gap(pairs, maps, embedder, trial_seed, n_steps=n_steps,
                               sigma=sigma, random_rankings=random_rankings,
                               batch_size=batch_size)
        results.append(TrialResult(
            trial=t,
            structured_gap=gaps["structured"],
            randomized_gap=gaps["randomized"],
            structured_pass=gaps["structured"] > margin,
            randomized_pass=abs(gaps["randomized"]) <= trial_floor,
        ))
    return SanityReport(tuple(results), margin, noise_floor)
