"""Command-line surface.

Subcommands: ``explain`` (pair saliency maps), ``identify``
(probe-vs-gallery ranking with per-rank maps), ``evaluate``
(deletion/insertion curves), ``sanity-check`` (model-randomization
test), and ``make-toyset`` (synthetic planted-difference data).  Every
command writes a ``run-manifest.json`` echoing its effective
configuration, so a run can be reproduced from its output directory
alone.  Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import __version__
from .errors import SaliexError
from .evaluation import (DEFAULT_BLUR_SIGMA, DEFAULT_STEPS, calibrate_threshold,
                         identification_curve, load_gallery_manifest,
                         load_pair_list, load_eval_pairs, verification_metric,
                         write_curve_csv)
from .explain import (ExplainConfig, average_probe_maps, explain_identification,
                      explain_pair)
from .imaging import ensure_dir, load_image, load_pfm, render_overlay, save_pfm, save_png
from .embedders import make_embedder
from .sanity import sanity_check
from .seeding import DEFAULT_SEED
from .toyset import ToySetConfig, write_toyset
from .types import MASK_TYPES, MaskGenConfig

SEED_ENV_VAR = "SALIEX_SEED"


class UsageError(Exception):
    """Bad invocation (malformed flags or environment); exits with 2."""


def _default_workers() -> int:
    return os.cpu_count() or 1


def _effective_seed(value: int | None) -> int:
    """--seed wins; otherwise the SALIEX_SEED variable; otherwise 0."""
    if value is not None:
        return value
    raw = os.environ.get(SEED_ENV_VAR)
    if raw is None:
        return DEFAULT_SEED
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV_VAR} must be an integer, got {raw!r}")


def _add_model_flag(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--model", default="toy:block-avg:g=8",
                        help="embedder spec: toy:block-avg:g=8, toy:rand-proj:d=128,seed=7, "
                             "ext:cmd=<shell command>, or ext:tcp=<host:port>")


def _add_mask_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--masks", type=int, default=1000, metavar="N",
                        help="number of perturbation masks (default 1000)")
    parser.add_argument("--patches", type=int, default=10, metavar="P",
                        help="square patches stamped per mask (default 10)")
    parser.add_argument("--patch-size", type=int, default=30, metavar="S",
                        help="patch side length in pixels (default 30)")
    parser.add_argument("--mask-type", choices=MASK_TYPES, default="binary",
                        help="patch fill: binary 0s, uniform random, or gaussian")


def _add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=None,
                        help=f"master seed (default: ${SEED_ENV_VAR} or {DEFAULT_SEED})")
    parser.add_argument("--workers", type=int, default=_default_workers(),
                        help="parallel embedding workers (default: available cores)")
    parser.add_argument("--batch-size", type=int, default=64,
                        help="images per embedder call (default 64)")
    parser.add_argument("--out-dir", required=True, help="output directory")


def _mask_config(args: argparse.Namespace) -> MaskGenConfig:
    return MaskGenConfig(num_masks=args.masks, patches_per_mask=args.patches,
                         patch_size=args.patch_size, mask_type=args.mask_type)


def _write_manifest(out_dir: str, command: str, config: dict) -> str:
    path = os.path.join(out_dir, "run-manifest.json")
    payload = {"tool": "saliex", "version": __version__, "command": command,
               "config": config}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
    return path


def _resolve(base_dir: str, path: str) -> str:
    return path if os.path.isabs(path) else os.path.join(base_dir, path)


def _map_path(maps_dir: str, image_path: str) -> str:
    stem, _ = os.path.splitext(image_path)
    return os.path.join(maps_dir, stem + ".pfm")


# ------------------------------------------------------------------ explain

def cmd_explain(args: argparse.Namespace) -> int:
    out_dir = ensure_dir(args.out_dir)
    seed = _effective_seed(args.seed)
    image_a = load_image(args.image_a)
    image_b = load_image(args.image_b)
    embedder = make_embedder(args.model, connections=args.workers,
                             max_batch=args.batch_size)
    cfg = ExplainConfig(mask_config=_mask_config(args), seed=seed,
                        regularization=args.regularize, batch_size=args.batch_size,
                        workers=args.workers)
    with embedder:
        result = explain_pair(image_a, image_b, embedder, cfg)

    maps = {
        "similar_a": (result.similar_a, image_a),
        "dissimilar_a": (result.dissimilar_a, image_a),
        "similar_b": (result.similar_b, image_b),
        "dissimilar_b": (result.dissimilar_b, image_b),
    }
    files = []
    for name, (saliency, image) in maps.items():
        pfm = os.path.join(out_dir, f"{name}.pfm")
        save_pfm(saliency, pfm)
        overlay = os.path.join(out_dir, f"overlay_{name}.png")
        save_png(render_overlay(image, saliency, args.alpha), overlay)
        files += [os.path.basename(pfm), os.path.basename(overlay)]

    scores_csv = os.path.join(out_dir, "scores.csv")
    with open(scores_csv, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["mask_index", "score_a", "score_b"])
        for i, (sa, sb) in enumerate(zip(result.scores_a, result.scores_b)):
            writer.writerow([i, f"{sa:.8f}", f"{sb:.8f}"])
    files.append("scores.csv")

    _write_manifest(out_dir, "explain", {
        "image_a": args.image_a, "image_b": args.image_b, "model": args.model,
        "masks": args.masks, "patches": args.patches, "patch_size": args.patch_size,
        "mask_type": args.mask_type, "seed": seed, "regularize": args.regularize,
        "alpha": args.alpha, "workers": args.workers, "batch_size": args.batch_size,
        "pair_score": result.pair_score, "regularized": result.regularized,
        "outputs": files,
    })
    print(f"pair score {result.pair_score:.6f}; wrote {len(files)} files to {out_dir}")
    return 0


# ----------------------------------------------------------------- identify

def cmd_identify(args: argparse.Namespace) -> int:
    out_dir = ensure_dir(args.out_dir)
    seed = _effective_seed(args.seed)
    probe = load_image(args.probe)
    base = os.path.dirname(os.path.abspath(args.gallery_manifest))
    rows = load_gallery_manifest(args.gallery_manifest)
    gallery = [(load_image(_resolve(base, path), (probe.height, probe.width)), identity)
               for path, identity in rows]
    embedder = make_embedder(args.model, connections=args.workers,
                             max_batch=args.batch_size)
    cfg = ExplainConfig(mask_config=_mask_config(args), seed=seed,
                        batch_size=args.batch_size, workers=args.workers)
    top_k = min(args.top_k, len(gallery))  # default 5 may exceed a small gallery
    with embedder:
        matches = explain_identification(probe, gallery, top_k, embedder, cfg)

    files = []
    ranked_csv = os.path.join(out_dir, "ranked.csv")
    with open(ranked_csv, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rank", "path", "identity", "score"])
        for m in matches:
            writer.writerow([m.rank, rows[m.gallery_index][0], m.identity,
                             f"{m.score:.8f}"])
    files.append("ranked.csv")
    for m in matches:
        for side, saliency in (("probe", m.explanation.signed_a),
                               ("gallery", m.explanation.signed_b)):
            name = f"rank{m.rank:02}_{m.identity}_{side}.pfm"
            save_pfm(saliency, os.path.join(out_dir, name))
            files.append(name)
    avg = average_probe_maps(matches)
    save_pfm(avg, os.path.join(out_dir, "probe_average.pfm"))
    files.append("probe_average.pfm")

    _write_manifest(out_dir, "identify", {
        "probe": args.probe, "gallery_manifest": args.gallery_manifest,
        "top_k": args.top_k, "model": args.model, "masks": args.masks,
        "patches": args.patches, "patch_size": args.patch_size,
        "mask_type": args.mask_type, "seed": seed, "workers": args.workers,
        "batch_size": args.batch_size, "outputs": files,
    })
    for m in matches:
        print(f"rank {m.rank}: {m.identity} score {m.score:.6f}")
    return 0


# ----------------------------------------------------------------- evaluate

def cmd_evaluate(args: argparse.Namespace) -> int:
    out_dir = ensure_dir(args.out_dir)
    embedder = make_embedder(args.model, connections=args.workers,
                             max_batch=args.batch_size)
    with embedder:
        if args.task == "verification":
            curve, summary = _evaluate_verification(args, embedder)
        else:
            curve, summary = _evaluate_identification(args, embedder)

    write_curve_csv(curve, os.path.join(out_dir, "curve.csv"))
    summary["auc"] = curve.auc
    with open(os.path.join(out_dir, "summary.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    _write_manifest(out_dir, "evaluate", {
        **summary,
        "task": args.task, "model": args.model, "workers": args.workers,
        "batch_size": args.batch_size, "outputs": ["curve.csv", "summary.json"],
    })
    print(f"{args.task} {summary['mode']} auc {curve.auc:.6f}; wrote curve.csv, "
          f"summary.json to {out_dir}")
    return 0


def _evaluate_verification(args, embedder):
    if args.pairs is None:
        raise SaliexError("--pairs is required for task 'verification'")
    pairs = load_pair_list(args.pairs)
    base = os.path.dirname(os.path.abspath(args.pairs))
    threshold = args.threshold
    if threshold is None:
        loaded = load_eval_pairs(pairs, base_dir=base)
        threshold = calibrate_threshold(loaded, embedder, args.batch_size)

    def map_source(image_path: str):
        return load_pfm(_map_path(args.maps_dir, image_path))

    curve = verification_metric(
        pairs, map_source, embedder, n=args.steps, mode=args.mode,
        which=args.which, threshold=threshold, sigma=args.sigma,
        base_dir=base, batch_size=args.batch_size,
    )
    summary = {"mode": args.mode, "which": args.which, "n": args.steps,
               "sigma": args.sigma, "threshold": threshold,
               "pairs": args.pairs, "maps_dir": args.maps_dir}
    return curve, summary


def _evaluate_identification(args, embedder):
    for flag, value in (("--probes", args.probes), ("--gallery", args.gallery)):
        if value is None:
            raise SaliexError(f"{flag} is required for task 'identification'")
    probes_base = os.path.dirname(os.path.abspath(args.probes))
    gallery_base = os.path.dirname(os.path.abspath(args.gallery))
    probe_rows = load_gallery_manifest(args.probes)
    gallery_rows = load_gallery_manifest(args.gallery)
    probes = [(load_image(_resolve(probes_base, path)), identity)
              for path, identity in probe_rows]
    gallery = [(load_image(_resolve(gallery_base, path)), identity)
               for path, identity in gallery_rows]
    probe_maps = [load_pfm(_map_path(args.maps_dir, path)) for path, _ in probe_rows]
    curve, excluded = identification_curve(
        probes, gallery, probe_maps, embedder, n=args.steps, rank_n=args.rank_n,
        mode=args.mode, sigma=args.sigma, batch_size=args.batch_size,
    )
    summary = {"mode": args.mode, "rank_n": args.rank_n, "n": args.steps,
               "sigma": args.sigma, "probes": args.probes, "gallery": args.gallery,
               "maps_dir": args.maps_dir,
               "excluded_probes": [probe_rows[i][0] for i in excluded]}
    return curve, summary


# ------------------------------------------------------------- sanity-check

def cmd_sanity_check(args: argparse.Namespace) -> int:
    out_dir = ensure_dir(args.out_dir)
    seed = _effective_seed(args.seed)
    pairs = load_pair_list(args.pairs)
    base = os.path.dirname(os.path.abspath(args.pairs))
    loaded = load_eval_pairs(pairs, base_dir=base)
    cfg = ExplainConfig(mask_config=_mask_config(args), seed=seed,
                        batch_size=args.batch_size, workers=args.workers)
    report = sanity_check(loaded, cfg, args.trials, margin=args.margin,
                          noise_floor=args.noise_floor, n_steps=args.steps,
                          sigma=args.sigma, batch_size=args.batch_size)
    for t in report.trials:
        verdict = "PASS" if t.passed else "FAIL"
        print(f"trial {t.trial:02}: structured {t.structured_gap:+.4f} "
              f"randomized {t.randomized_gap:+.4f} {verdict}")
    print(f"mean structured {report.structured_gap:+.4f} (margin {report.margin}), "
          f"mean randomized {report.randomized_gap:+.4f} "
          f"(noise floor {report.noise_floor}): "
          f"{'PASS' if report.passed else 'FAIL'}")
    report.save_json(os.path.join(out_dir, "sanity.json"))
    _write_manifest(out_dir, "sanity-check", {
        "pairs": args.pairs, "trials": args.trials, "margin": args.margin,
        "noise_floor": args.noise_floor, "masks": args.masks,
        "patches": args.patches, "patch_size": args.patch_size,
        "mask_type": args.mask_type, "steps": args.steps, "sigma": args.sigma,
        "seed": seed, "workers": args.workers, "batch_size": args.batch_size,
        "passed": report.passed, "outputs": ["sanity.json"],
    })
    return 0


# ------------------------------------------------------------- make-toyset

def cmd_make_toyset(args: argparse.Namespace) -> int:
    out_dir = ensure_dir(args.out_dir)
    seed = _effective_seed(args.seed)
    cfg = ToySetConfig(subjects=args.subjects,
                       images_per_subject=args.images_per_subject, seed=seed)
    manifest = write_toyset(cfg, out_dir)
    _write_manifest(out_dir, "make-toyset", {
        "subjects": args.subjects, "images_per_subject": args.images_per_subject,
        "seed": seed, "outputs": [manifest["pairs_file"],
                                  manifest["gallery_manifest"],
                                  manifest["probes_manifest"], "toyset.json"],
    })
    total = len(manifest["images"]) + len(manifest["planted_pairs"])
    print(f"wrote {total} images and manifests to {out_dir}")
    return 0


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="saliex",
        description="Saliency explanations for black-box image-embedding models.",
    )
    parser.add_argument("--version", action="version", version=f"saliex {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("explain", help="explain one image pair")
    p.add_argument("--image-a", required=True)
    p.add_argument("--image-b", required=True)
    _add_model_flag(p)
    _add_mask_flags(p)
    p.add_argument("--regularize", action="store_true",
                   help="blend counterpart content into masked regions (for "
                        "dissimilarity maps of non-matching pairs)")
    p.add_argument("--alpha", type=float, default=0.5,
                   help="overlay blend weight in [0, 1] (default 0.5)")
    _add_common_flags(p)
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("identify", help="rank a gallery against a probe and explain top-K")
    p.add_argument("--probe", required=True)
    p.add_argument("--gallery-manifest", required=True,
                   help="file of path<TAB>identity lines, paths relative to it")
    p.add_argument("--top-k", type=int, default=5)
    _add_model_flag(p)
    _add_mask_flags(p)
    _add_common_flags(p)
    p.set_defaults(func=cmd_identify)

    p = sub.add_parser("evaluate", help="deletion/insertion curve for saved maps")
    p.add_argument("--task", choices=("verification", "identification"),
                   default="verification")
    p.add_argument("--pairs", help="pair list file (verification)")
    p.add_argument("--probes", help="probe manifest (identification)")
    p.add_argument("--gallery", help="gallery manifest (identification)")
    p.add_argument("--maps-dir", required=True,
                   help="directory of .pfm maps mirroring the image paths")
    _add_model_flag(p)
    p.add_argument("--mode", choices=("deletion", "insertion"), default="deletion")
    p.add_argument("--which", choices=("similarity", "dissimilarity"),
                   default="similarity")
    p.add_argument("--rank-n", type=int, default=1,
                   help="identification Rank-N (default 1)")
    p.add_argument("--steps", type=int, default=DEFAULT_STEPS)
    p.add_argument("--sigma", type=float, default=DEFAULT_BLUR_SIGMA,
                   help="map blur before ranking (default 4.0)")
    p.add_argument("--threshold", type=float, default=None,
                   help="fixed verification threshold (default: calibrate on the pairs)")
    _add_common_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sanity-check", help="model-randomization sanity check")
    p.add_argument("--pairs", required=True, help="pair list file with both labels")
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--margin", type=float, default=0.05)
    p.add_argument("--noise-floor", type=float, default=0.02)
    _add_mask_flags(p)
    p.add_argument("--steps", type=int, default=DEFAULT_STEPS)
    p.add_argument("--sigma", type=float, default=DEFAULT_BLUR_SIGMA)
    _add_common_flags(p)
    p.set_defaults(func=cmd_sanity_check)

    p = sub.add_parser("make-toyset", help="synthesize a planted-difference dataset")
    p.add_argument("--subjects", type=int, default=6)
    p.add_argument("--images-per-subject", type=int, default=3)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_make_toyset)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (SaliexError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
