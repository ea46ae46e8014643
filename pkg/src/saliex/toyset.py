"""Synthetic planted-difference dataset.

Each "identity" is a smooth random texture raised to a power, so its
energy concentrates in a few bright zones on near-dark ground: the
zones act like discriminative features whose removal genuinely
destroys the match.  Same-identity images add two kinds of capture
noise: a coarse-scale component (survives feature pooling, so matching
scores sit below 1 by a controlled margin and the residual after
removing the bright zones is noise-dominated) and fine i.i.d. grain.
Non-matching pairs come in two kinds: planted pairs copy an identity
and replace one square patch with the photometric complement of the
covered area, so occluding the patch genuinely raises the pair's
similarity and the ground-truth dissimilar region is known exactly;
impostor pairs cross two subjects, anchoring threshold calibration the
way real impostor comparisons do.  Desk-scale stand-in for a labeled
face-verification set.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigError
from .evaluation import EvalPair, PairEntry, PairList, save_pair_list
from .imaging import _bilinear_resize, save_png
from .seeding import derive_seed
from .types import Image


@dataclass(frozen=True)
class ToySetConfig:
    subjects: int = 6
    images_per_subject: int = 3
    height: int = 112
    width: int = 112
    planted_per_subject: int = 1
    patch_size: int = 24
    noise_sigma: float = 0.01
    smooth_noise_sigma: float = 0.10
    smooth_noise_grid: int = 8
    texture_grid: int = 7
    texture_exponent: float = 3.0
    seed: int = 0

    def __post_init__(self):
        if self.subjects < 1:
            raise ConfigError(f"subjects must be >= 1, got {self.subjects}")
        if self.images_per_subject < 1:
            raise ConfigError(f"images_per_subject must be >= 1, got {self.images_per_subject}")
        if self.planted_per_subject < 0:
            raise ConfigError(f"planted_per_subject must be >= 0, got {self.planted_per_subject}")
        if not (1 <= self.patch_size <= min(self.height, self.width)):
            raise ConfigError(f"patch_size {self.patch_size} must fit inside "
                              f"{self.height}x{self.width}")
        if self.texture_grid < 2 or self.smooth_noise_grid < 2:
            raise ConfigError("texture_grid and smooth_noise_grid must be >= 2")
        if self.noise_sigma < 0 or self.smooth_noise_sigma < 0:
            raise ConfigError("noise sigmas must be >= 0")


@dataclass(frozen=True)
class PlantedPair:
    """A non-matching pair with a known ground-truth difference region."""

    subject: int
    image_a: Image
    image_b: Image
    patch_top: int
    patch_left: int
    patch_size: int

    def patch_mask(self) -> np.ndarray:
        m = np.zeros((self.image_a.height, self.image_a.width), dtype=bool)
        m[self.patch_top:self.patch_top + self.patch_size,
          self.patch_left:self.patch_left + self.patch_size] = True
        return m


@dataclass(frozen=True)
class ToySet:
    config: ToySetConfig
    variants: tuple[tuple[Image, ...], ...]
    planted: tuple[PlantedPair, ...]

    def matching_pairs(self) -> list[EvalPair]:
        pairs = []
        for imgs in self.variants:
            for i in range(len(imgs)):
                for j in range(i + 1, len(imgs)):
                    pairs.append(EvalPair(imgs[i], imgs[j], True))
        return pairs

    def non_matching_pairs(self) -> list[EvalPair]:
        return [EvalPair(p.image_a, p.image_b, False) for p in self.planted]

    def impostor_pairs(self) -> list[EvalPair]:
        """Cross-subject pairs: the usual non-matching class, far below
        matching scores, so threshold calibration keeps a wide margin."""
        n = len(self.variants)
        if n < 2:
            return []
        pairs = []
        for si in range(n):
            other = self.variants[(si + 1) % n]
            pairs.append(EvalPair(self.variants[si][0], other[-1], False))
        return pairs

    def all_pairs(self) -> list[EvalPair]:
        return self.matching_pairs() + self.non_matching_pairs() + self.impostor_pairs()

    def gallery(self) -> list[tuple[Image, str]]:
        """First variant of each subject, labeled by subject id."""
        return [(imgs[0], f"s{si:02}") for si, imgs in enumerate(self.variants)]

    def probes(self) -> list[tuple[Image, str]]:
        """Remaining variants of each subject (needs images_per_subject >= 2)."""
        out = []
        for si, imgs in enumerate(self.variants):
            for img in imgs[1:]:
                out.append((img, f"s{si:02}"))
        return out


def _smooth_field(rng: np.random.Generator, height: int, width: int, grid: int,
                  loc: float, scale: float) -> np.ndarray:
    """Coarse random grid, bilinearly upsampled: a blotchy smooth field."""
    coarse = rng.normal(loc, scale, (grid, grid)).astype(np.float32)[:, :, None]
    return _bilinear_resize(coarse, height, width)[:, :, 0].astype(np.float64)


def _smooth_texture(rng: np.random.Generator, height: int, width: int,
                    grid: int, exponent: float) -> np.ndarray:
    coarse = rng.uniform(0.0, 1.0, (grid, grid)).astype(np.float32)[:, :, None]
    up = _bilinear_resize(coarse, height, width)[:, :, 0].astype(np.float64)
    return np.clip(up, 0.0, 1.0) ** exponent


def _capture(base: np.ndarray, rng: np.random.Generator, cfg: ToySetConfig) -> Image:
    """One noisy 'capture' of an identity texture."""
    smooth = _smooth_field(rng, cfg.height, cfg.width, cfg.smooth_noise_grid,
                           0.0, cfg.smooth_noise_sigma)
    fine = rng.normal(0.0, cfg.noise_sigma, base.shape)
    out = np.clip(base + smooth + fine, 0.0, 1.0)
    return Image(out.astype(np.float32)[:, :, None])


def build_toyset(cfg: ToySetConfig) -> ToySet:
    """Construct the full set in memory; same config reproduces it exactly."""
    variants = []
    planted = []
    for si in range(cfg.subjects):
        base_rng = np.random.default_rng(derive_seed(cfg.seed, "toyset-base", si))
        base = _smooth_texture(base_rng, cfg.height, cfg.width,
                               cfg.texture_grid, cfg.texture_exponent)
        subject_imgs = []
        for vi in range(cfg.images_per_subject):
            rng = np.random.default_rng(derive_seed(cfg.seed, "toyset-variant", si * 10000 + vi))
            subject_imgs.append(_capture(base, rng, cfg))
        variants.append(tuple(subject_imgs))

        for pi in range(cfg.planted_per_subject):
            rng = np.random.default_rng(derive_seed(cfg.seed, "toyset-planted", si * 10000 + pi))
            # sample several positions, keep the darkest: occlusion can
            # only reveal a difference that has energy, so the planted
            # fill must land bright on dark ground
            cand_t = rng.integers(0, cfg.height - cfg.patch_size + 1, size=12)
            cand_l = rng.integers(0, cfg.width - cfg.patch_size + 1, size=12)
            means = [base[t:t + cfg.patch_size, l:l + cfg.patch_size].mean()
                     for t, l in zip(cand_t, cand_l)]
            pick = int(np.argmin(means))
            top, left = int(cand_t[pick]), int(cand_l[pick])
            core = base.copy()
            window = (slice(top, top + cfg.patch_size), slice(left, left + cfg.patch_size))
            # two-tone anti-fill: far from the covered texture at every
            # pixel, so the planted region stays visible to pooled
            # features no matter where it lands
            core[window] = np.where(core[window] < 0.5, 0.95, 0.05)
            planted.append(PlantedPair(
                subject=si,
                image_a=subject_imgs[0],
                image_b=_capture(core, rng, cfg),
                patch_top=top, patch_left=left, patch_size=cfg.patch_size,
            ))
    return ToySet(cfg, tuple(variants), tuple(planted))


def write_toyset(cfg: ToySetConfig, out_dir: str) -> dict:
    """Materialize a toy set: images/, pairs.txt, gallery.txt, probes.txt,
    and a toyset.json that echoes the config and the planted patch
    coordinates for localization tests.  Returns the manifest dict.
    """
    toy = build_toyset(cfg)
    img_dir = os.path.join(out_dir, "images")
    os.makedirs(img_dir, exist_ok=True)

    variant_paths: list[list[str]] = []
    for si, imgs in enumerate(toy.variants):
        row = []
        for vi, img in enumerate(imgs):
            rel = os.path.join("images", f"s{si:02}_v{vi:02}.png")
            save_png(img, os.path.join(out_dir, rel))
            row.append(rel)
        variant_paths.append(row)

    entries: list[PairEntry] = []
    for si, row in enumerate(variant_paths):
        for i in range(len(row)):
            for j in range(i + 1, len(row)):
                entries.append(PairEntry(row[i], row[j], True))
    if len(variant_paths) >= 2:
        for si, row in enumerate(variant_paths):
            other = variant_paths[(si + 1) % len(variant_paths)]
            entries.append(PairEntry(row[0], other[-1], False))

    planted_records = []
    counters: dict[int, int] = {}
    for p in toy.planted:
        pi = counters.get(p.subject, 0)
        counters[p.subject] = pi + 1
        rel = os.path.join("images", f"s{p.subject:02}_planted{pi:02}.png")
        save_png(p.image_b, os.path.join(out_dir, rel))
        path_a = variant_paths[p.subject][0]
        entries.append(PairEntry(path_a, rel, False))
        planted_records.append({
            "subject": p.subject, "path_a": path_a, "path_b": rel,
            "patch_top": p.patch_top, "patch_left": p.patch_left,
            "patch_size": p.patch_size,
        })

    save_pair_list(PairList(tuple(entries)), os.path.join(out_dir, "pairs.txt"))

    with open(os.path.join(out_dir, "gallery.txt"), "w", encoding="utf-8") as fh:
        for si, row in enumerate(variant_paths):
            fh.write(f"{row[0]}\ts{si:02}\n")
    with open(os.path.join(out_dir, "probes.txt"), "w", encoding="utf-8") as fh:
        for si, row in enumerate(variant_paths):
            for rel in row[1:]:
                fh.write(f"{rel}\ts{si:02}\n")

    manifest = {
        "config": asdict(cfg),
        "images": [p for row in variant_paths for p in row],
        "planted_pairs": planted_records,
        "pairs_file": "pairs.txt",
        "gallery_manifest": "gallery.txt",
        "probes_manifest": "probes.txt",
    }
    with open(os.path.join(out_dir, "toyset.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
    return manifest
