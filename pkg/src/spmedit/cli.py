"""Command-line entry points: train, edit, panorama, eval, ablate, gen-data,
and serve. Every subcommand validates its inputs before touching model state
and is reproducible under --seed.
"""

import argparse
import dataclasses
import os
import sys

import numpy as np
import torch

from . import ablation, metrics
from .checkpoint import load_checkpoint, save_trainer
from .data import (DatasetSpec, load_directory, load_image, load_label_map,
                   materialize_dataset, save_image, synthetic_scene)
from .editing import EditRequest, edit, extend_rightmost_column, panorama
from .masks import MASK_TYPES, load_mask, make_mask
from .metrics import boundary_style_discrepancy, feature_stats, frechet_distance
from .networks import PyramidConfig, build_pyramid
from .training import FeatureEmbedder, OptimConfig, Trainer, fit


def read_config_file(path):
    """key = value lines; blank lines and #-comments ignored."""
    items = {}
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            items[key.strip()] = value.strip()
    return items


def _coerce(value, target):
    if isinstance(target, bool):
        return value in ("1", "true", "True", "yes")
    if isinstance(target, int):
        return int(value)
    if isinstance(target, float):
        return float(value)
    if isinstance(target, tuple):
        parts = value.replace("x", ",").split(",")
        return tuple(int(p) for p in parts)
    return value


def apply_config(obj, items):
    for f in dataclasses.fields(obj):
        if f.name in items:
            setattr(obj, f.name, _coerce(items[f.name], getattr(obj, f.name)))
    return obj


def desk_config(resolution=64):
    return PyramidConfig(base_resolution=(resolution, resolution))


def _load_scenes(args, count, rng):
    if getattr(args, "data", None):
        spec = DatasetSpec(source="directory", root=args.data, train=True, crop_size=args.resolution)
        return list(load_directory(spec, rng))
    return [synthetic_scene(rng, args.resolution, args.resolution) for _ in range(count)]


def cmd_train(args):
    torch.manual_seed(args.seed)
    cfg = desk_config(args.resolution)
    opt = OptimConfig(batch_size=args.batch_size)
    if args.config:
        items = read_config_file(args.config)
        apply_config(cfg, items)
        apply_config(opt, items)
    cfg = ablation.variant_config(args.variant, cfg)
    rng = np.random.default_rng(args.seed)
    scenes = _load_scenes(args, args.scenes, rng)

    state = build_pyramid(cfg, seed=args.seed)
    trainer = Trainer(state, opt)
    log_path = os.path.join(os.path.dirname(args.out) or ".", "train_log.csv")
    print(f"training variant={args.variant} steps={args.steps} scenes={len(scenes)}")
    run = fit(trainer, scenes, args.steps, rng, log_path=log_path)
    save_trainer(trainer, args.out)
    last = run.history[-1]
    print(f"saved {args.out} after {run.steps_done} steps (l1={last.l1:.4f}, total={last.total_g:.4f})")


def _require(path, what):
    if not path or not os.path.exists(path):
        print(f"error: {what} not found: {path}", file=sys.stderr)
        raise SystemExit(2)


def cmd_edit(args):
    _require(args.checkpoint, "checkpoint")
    _require(args.image, "image")
    _require(args.mask, "mask")
    _require(args.labels, "label map")
    state = load_checkpoint(args.checkpoint)
    image = load_image(args.image)
    mask = load_mask(args.mask)
    labels = load_label_map(args.labels)
    req = EditRequest(image=image * (1.0 - mask[..., None]).astype(np.float32),
                      mask=mask, label_map=labels)
    out = edit(req, state)
    save_image(out, args.out)
    print(f"wrote {args.out}")


def cmd_panorama(args):
    _require(args.checkpoint, "checkpoint")
    _require(args.image, "image")
    state = load_checkpoint(args.checkpoint)
    image = load_image(args.image)
    if args.labels:
        seg = load_label_map(args.labels)
    else:
        seg = np.zeros(image.shape[:2], dtype=np.int64)

    def provider(_step, width):
        nonlocal seg
        layout = extend_rightmost_column(seg, width)
        seg = np.concatenate([seg, layout[:, : state.cfg.base_resolution[1] // 2]], axis=1)
        return layout

    out = panorama(image, args.steps, provider, state)
    save_image(out, args.out)
    print(f"wrote {args.out} ({out.shape[1]}x{out.shape[0]})")


def cmd_eval(args):
    _require(args.checkpoint, "checkpoint")
    state = load_checkpoint(args.checkpoint)
    rng = np.random.default_rng(args.seed)
    h, w = state.cfg.base_resolution
    scenes = [synthetic_scene(rng, h, w) for _ in range(args.scenes)]
    embedder = FeatureEmbedder()
    mask_types = [args.mask_type] if args.mask_type else list(MASK_TYPES)

    rows = []
    for mask_type in mask_types:
        import torch as _torch
        edited, reals, boundary = [], [], []
        for scene in scenes:
            mask = make_mask(mask_type, scene.mask_context(), rng)
            req = EditRequest(image=scene.image * (1.0 - mask[..., None]).astype(np.float32),
                              mask=mask, label_map=scene.seg.copy())
            out = edit(req, state)
            boundary.append(boundary_style_discrepancy(out, mask, band_width=3, seg=scene.seg))
            edited.append(_torch.from_numpy(out).permute(2, 0, 1))
            reals.append(_torch.from_numpy(scene.image).permute(2, 0, 1))
        fid = frechet_distance(feature_stats(_torch.stack(edited), embedder),
                               feature_stats(_torch.stack(reals), embedder))
        rows.append(("frechet_distance", "synthetic", mask_type, fid))
        rows.append(("boundary_style_discrepancy", "synthetic", mask_type, float(np.mean(boundary))))
        print(f"{mask_type}: fid={fid:.4f} boundary={np.mean(boundary):.4f}")
    if args.out:
        metrics.write_metric_rows(rows, args.out)
        print(f"wrote {args.out}")


def cmd_ablate(args):
    cfg = desk_config(args.resolution)
    if args.config:
        apply_config(cfg, read_config_file(args.config))
    variants = args.variants.split(",") if args.variants else list(ablation.VARIANTS)
    seeds = [int(s) for s in args.seeds.split(",")]
    report = ablation.run_ablation(cfg, variants=variants, seeds=seeds,
                                   train_count=args.scenes, eval_count=args.eval_scenes,
                                   steps=args.steps, data_seed=args.seed,
                                   report_path=args.out)
    for metric in ("boundary", "fid", "final_l1"):
        print(metric, report.by_variant(metric))


def cmd_gen_data(args):
    rng = np.random.default_rng(args.seed)
    materialize_dataset(args.out, args.count, rng, args.resolution, args.resolution)
    print(f"wrote {args.count} scenes under {args.out}")


def cmd_serve(args):
    _require(args.checkpoint, "checkpoint")
    from .service import serve

    state = load_checkpoint(args.checkpoint)
    name = os.path.splitext(os.path.basename(args.checkpoint))[0]
    serve({name: state}, address=args.address, default_id=name)


def build_parser():
    p = argparse.ArgumentParser(prog="spmedit",
                                description="semantic image editing with style-preserved modulation")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, checkpoint=False):
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--config", help="key=value config file")
        if checkpoint:
            sp.add_argument("--checkpoint", required=True)

    sp = sub.add_parser("train", help="train a pyramid on synthetic or directory data")
    common(sp)
    sp.add_argument("--out", required=True, help="checkpoint output path")
    sp.add_argument("--steps", type=int, default=2000)
    sp.add_argument("--scenes", type=int, default=64)
    sp.add_argument("--batch-size", type=int, default=4)
    sp.add_argument("--resolution", type=int, default=64)
    sp.add_argument("--data", help="directory with images/ + annotations/")
    sp.add_argument("--variant", default="spm", choices=ablation.VARIANTS)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("edit", help="edit one image from (image, mask, labels) PNGs")
    common(sp, checkpoint=True)
    sp.add_argument("--image", required=True)
    sp.add_argument("--mask", required=True)
    sp.add_argument("--labels", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_edit)

    sp = sub.add_parser("panorama", help="extend an image to the right recursively")
    common(sp, checkpoint=True)
    sp.add_argument("--image", required=True)
    sp.add_argument("--labels")
    sp.add_argument("--steps", type=int, default=4)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_panorama)

    sp = sub.add_parser("eval", help="metric grid on held-out synthetic scenes")
    common(sp, checkpoint=True)
    sp.add_argument("--scenes", type=int, default=32)
    sp.add_argument("--mask-type", choices=MASK_TYPES)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("ablate", help="train and score the variant grid")
    common(sp)
    sp.add_argument("--variants", help="comma list, default all")
    sp.add_argument("--seeds", default="0")
    sp.add_argument("--steps", type=int, default=1500)
    sp.add_argument("--scenes", type=int, default=64)
    sp.add_argument("--eval-scenes", type=int, default=32)
    sp.add_argument("--resolution", type=int, default=64)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_ablate)

    sp = sub.add_parser("gen-data", help="materialize synthetic scenes to disk")
    common(sp)
    sp.add_argument("--out", required=True)
    sp.add_argument("--count", type=int, default=64)
    sp.add_argument("--resolution", type=int, default=64)
    sp.set_defaults(func=cmd_gen_data)

    sp = sub.add_parser("serve", help="run the HTTP editing service")
    common(sp, checkpoint=True)
    sp.add_argument("--address", default="127.0.0.1:8000")
    sp.set_defaults(func=cmd_serve)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    args.func(args)


if __name__ == "__main__":
    main()
