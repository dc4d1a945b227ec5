"""Command-line entry points.

Subcommands:
  synth    generate a synthetic two-region test set plus a ready config
  segment  pure SDIE segmentation of a given image
  joint    full alternating reconstruction-segmentation run
  metrics  Dice / PSNR between files

Runs are configured by a JSON file whose scalar keys match the JointConfig
field names (plus "preset" and a "paths" table); command-line flags override
file values.  Exit codes: 0 success, 2 finished with solver warnings,
1 error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import forward, image_io
from .config import config_from_dict, load_config
from .pipeline import (
    JointProblem,
    Reference,
    add_gaussian_noise,
    dice,
    joint_rec_seg,
    psnr,
)
from .sdie import seg_update
from .synth import reference_strip, two_region_image


def _add_run_flags(parser):
    parser.add_argument("--config", type=Path, required=True,
                        help="JSON configuration file")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the run seed")
    parser.add_argument("--exact-mode", action="store_true", default=None,
                        help="use the full interpolation set (X = V)")
    parser.add_argument("--iters", type=int, default=None,
                        help="override the outer iteration count")
    parser.add_argument("--out", type=Path, default=Path("."),
                        help="output directory")


def _load_run(args):
    cfg, extras = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    if args.exact_mode:
        cfg = cfg.replace(exact_mode=True)
    if args.iters is not None:
        cfg = cfg.replace(outer_iters=args.iters)
    paths = extras.get("paths", {})
    base = args.config.parent

    def resolve(key):
        return (base / paths[key]).resolve() if key in paths else None

    ref_path, ref_mask_path = resolve("reference"), resolve("reference_mask")
    if ref_path is None or ref_mask_path is None:
        raise ValueError("config needs paths.reference and "
                         "paths.reference_mask")
    reference = Reference(image_io.load_image(ref_path),
                          image_io.load_mask(ref_mask_path))

    observed_path = resolve("observed")
    clean_path = resolve("clean")
    clean = image_io.load_image(clean_path) if clean_path else None
    if observed_path is not None:
        observed = image_io.load_image(observed_path)
    elif clean is not None and cfg.noise_sigma >= 0:
        model = forward.ForwardModel(cfg.model_kind, cfg.blur_length)
        observed = add_gaussian_noise(forward.apply(model, clean),
                                      cfg.noise_sigma, cfg.seed)
    else:
        raise ValueError("config needs paths.observed, or paths.clean plus "
                         "noise_sigma to synthesise observations")

    truth_path = resolve("truth_mask")
    truth = image_io.load_mask(truth_path) if truth_path else None
    return JointProblem(observed=observed, reference=reference, config=cfg,
                        clean=clean, truth_mask=truth)


def cmd_synth(args):
    cfg, _ = (config_from_dict({"preset": "synthetic"})
              if args.config is None else load_config(args.config))
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    if args.noise_sigma is not None:
        cfg = cfg.replace(noise_sigma=args.noise_sigma)
    if args.blur_length:
        cfg = cfg.replace(model_kind="motion-blur",
                          blur_length=args.blur_length)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    clean, mask = two_region_image(args.height, args.width, args.channels,
                                   seed=cfg.seed, fg=args.fg, bg=args.bg)
    reference = reference_strip(args.ref_pixels, args.channels,
                                seed=cfg.seed + 1, fg=args.fg, bg=args.bg)
    model = forward.ForwardModel(cfg.model_kind, cfg.blur_length)
    observed = add_gaussian_noise(forward.apply(model, clean),
                                  cfg.noise_sigma, cfg.seed)
    image_io.save_image(out / "clean.png", clean)
    image_io.save_mask(out / "truth_mask.png", mask, args.height, args.width)
    image_io.save_image(out / "observed.png", observed)
    image_io.save_image(out / "reference.png", reference.image)
    image_io.save_mask(out / "reference_mask.png", reference.labels,
                       1, args.ref_pixels)
    config = cfg.to_dict()
    config["paths"] = {
        "reference": "reference.png",
        "reference_mask": "reference_mask.png",
        "clean": "clean.png",
        "truth_mask": "truth_mask.png",
    }
    (out / "config.json").write_text(json.dumps(config, indent=2) + "\n",
                                     encoding="utf-8")
    print(f"synthetic instance written to {out}")
    print("note: observed.png is clipped to [0,1] by the file format; the "
          "config omits it so runs resynthesise unclipped noise from the "
          "seed")
    return 0


def cmd_joint(args):
    problem = _load_run(args)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)

    def snapshot(n, x, _u):
        image_io.save_image(out / f"recon_{n:03d}.png", x)

    record = joint_rec_seg(problem, on_iteration=snapshot)
    (out / "run.csv").write_text(record.to_csv(), encoding="utf-8")
    grid = problem.observed.grid
    image_io.save_image(out / "recon_final.png", record.recon)
    image_io.save_image(out / "recon_best.png", record.best_recon)
    image_io.save_mask(out / "mask_final.png",
                       record.mask[:problem.n_y], grid.height, grid.width)
    image_io.save_mask(out / "mask_best.png",
                       record.best_labels[:problem.n_y] >= 0.5,
                       grid.height, grid.width)
    last = record.rows[-1]
    print(f"finished {len(record.rows) - 1} iterations: "
          f"dice={last.dice:.4f} psnr={last.psnr_db:.2f} dB "
          f"(best iteration {record.best_iteration})")
    for message in record.warnings:
        print(f"warning: {message}", file=sys.stderr)
    return 2 if record.warnings else 0


def cmd_segment(args):
    problem = _load_run(args)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    cfg = problem.config
    # pure label update on the input image: no reconstruction pass
    k1, k2 = cfg.split_counts(problem.n_y, problem.n_z)
    if args.iters is not None:
        cfg = cfg.replace(max_sdie_iters=args.iters)
    result = seg_update(
        problem.f, problem.stacked_features(problem.observed), problem.n_y,
        problem.mu, problem.f, beta=1.0, nu=0.0, tau=cfg.tau,
        eps=cfg.epsilon, sigma=cfg.sigma, k1=k1, k2=k2, k_s=cfg.k_strang,
        n_substeps=cfg.n_euler_substeps, delta=cfg.delta_stop,
        max_iters=cfg.max_sdie_iters, seed=problem.seeds(1)[0],
        u_init=np.r_[cfg.u0_constant * np.ones(problem.n_y),
                     problem.reference.labels])
    grid = problem.observed.grid
    image_io.save_mask(out / "mask.png", result.values[:problem.n_y] >= 0.5,
                       grid.height, grid.width)
    line = f"segmented in {result.iterations} sweeps"
    if problem.truth_mask is not None:
        line += (": dice="
                 f"{dice(result.values[:problem.n_y], problem.truth_mask):.4f}")
    print(line)
    if not result.converged:
        print("warning: segmentation hit its iteration cap", file=sys.stderr)
        return 2
    return 0


def cmd_metrics(args):
    out = {}
    if args.pred and args.truth:
        out["dice"] = dice(image_io.load_mask(args.pred),
                           image_io.load_mask(args.truth))
    if args.image and args.clean:
        out["psnr_db"] = psnr(image_io.load_image(args.image),
                              image_io.load_image(args.clean))
    if not out:
        print("nothing to compare: pass --pred/--truth and/or "
              "--image/--clean", file=sys.stderr)
        return 1
    for key, value in out.items():
        print(f"{key}={'inf' if math.isinf(value) else f'{value:.6f}'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="graphrecseg",
        description="graph-based joint image reconstruction-segmentation")
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="generate a synthetic instance")
    p_synth.add_argument("--out", type=Path, required=True)
    p_synth.add_argument("--config", type=Path, default=None)
    p_synth.add_argument("--seed", type=int, default=None)
    p_synth.add_argument("--height", type=int, default=64)
    p_synth.add_argument("--width", type=int, default=64)
    p_synth.add_argument("--channels", type=int, default=1)
    p_synth.add_argument("--ref-pixels", type=int, default=10)
    p_synth.add_argument("--fg", type=float, default=0.8)
    p_synth.add_argument("--bg", type=float, default=0.2)
    p_synth.add_argument("--noise-sigma", type=float, default=None)
    p_synth.add_argument("--blur-length", type=int, default=0)
    p_synth.set_defaults(func=cmd_synth)

    p_joint = sub.add_parser("joint", help="run the full alternating scheme")
    _add_run_flags(p_joint)
    p_joint.set_defaults(func=cmd_joint)

    p_seg = sub.add_parser("segment",
                           help="initial reconstruction + one segmentation")
    _add_run_flags(p_seg)
    p_seg.set_defaults(func=cmd_segment)

    p_met = sub.add_parser("metrics", help="Dice / PSNR between files")
    p_met.add_argument("--pred", type=Path)
    p_met.add_argument("--truth", type=Path)
    p_met.add_argument("--image", type=Path)
    p_met.add_argument("--clean", type=Path)
    p_met.set_defaults(func=cmd_metrics)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
