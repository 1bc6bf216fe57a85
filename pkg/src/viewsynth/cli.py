"""Command-line entry point. Subcommands are thin wrappers over the library;
`serve` starts the frame-streaming service."""

from __future__ import annotations

import argparse
import csv
import os
import sys
from pathlib import Path

import numpy as np

from . import checks, formats, geometry, metrics, scenes, train as train_mod, warp
from .tae import TaeModel, ViewChange, interpolate_latents, load_model
from .autodiff import Tensor


class CliError(Exception):
    pass


def _load_train_config(path: str | None, overrides: dict) -> train_mod.TrainConfig:
    mapping = {}
    if path is not None:
        try:
            mapping = formats.read_config(path)
        except FileNotFoundError:
            raise CliError(f"config: no such file: {path}")
        except formats.FormatError as e:
            raise CliError(f"config: {e}")
    mapping.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return train_mod.TrainConfig.from_mapping(mapping)
    except ValueError as e:
        raise CliError(f"config: {e}")


def _load_model_or_fail(path: str) -> TaeModel:
    try:
        return load_model(path)
    except FileNotFoundError as e:
        raise CliError(f"checkpoint: no such file: {e.filename}")


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for row in rows:
            writer.writerow([row[0]] + [f"{v:.9g}" for v in row[1:]])


def cmd_train(args) -> int:
    config = _load_train_config(args.config, {"seed": args.seed, "variant": args.variant})
    result = train_mod.train(config, out_dir=args.out,
                             log=(None if args.quiet else print))
    print(f"final val_l1 {result.epoch_rows[-1][2]:.9g} "
          f"baseline {result.baseline_l1:.9g} checkpoint {result.checkpoint_path}")
    return 0


def cmd_eval(args) -> int:
    model = _load_model_or_fail(args.checkpoint)
    config = _load_train_config(args.config, {"seed": args.seed})
    pairs = train_mod._pair_pool(config, config.val_scene_seeds())
    rng = np.random.default_rng(config.seed + 1)
    idx = rng.choice(len(pairs), size=min(config.val_pairs, len(pairs)), replace=False)
    pairs = [pairs[i] for i in idx]
    result = train_mod.evaluate_depth_flow(model, pairs)
    result["recon_l1"] = train_mod.evaluate_pairs(model, pairs)
    result["copy_baseline_l1"] = train_mod.copy_source_baseline(pairs)
    rows = [(name, value) for name, value in sorted(result.items())]
    _write_csv(args.out, ["metric", "value"], rows)
    for name, value in rows:
        print(f"{name} {value:.9g}")
    return 0


def cmd_sweep(args) -> int:
    model = _load_model_or_fail(args.checkpoint)
    spec = scenes.random_scene(args.scene_seed)
    rows = train_mod.evaluate_sweep(model, spec, args.range, args.step,
                                    elevation_deg=args.elevation)
    _write_csv(args.out, ["angle_deg", "l1", "ssim"], rows)
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


def cmd_render(args) -> int:
    try:
        poses = formats.read_poses(args.poses)
    except FileNotFoundError:
        raise CliError(f"poses: no such file: {args.poses}")
    except formats.FormatError as e:
        raise CliError(f"poses: {e}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    spec = scenes.random_scene(args.scene_seed)
    if args.checkpoint is not None:
        model = _load_model_or_fail(args.checkpoint)
        k = scenes.default_intrinsics(model.config.image_size)
    else:
        model = None
        k = scenes.default_intrinsics(args.image_size)
    source = scenes.raycast(spec, scenes.orbit_pose(0.0, 0.0), k)
    for i, pose in enumerate(poses):
        t_st = geometry.invert(pose)
        if model is None:
            target_pose = geometry.compose(source.pose, pose)
            depth = scenes.raycast(spec, target_pose, k).depth
            image, _ = warp.synthesize_oracle(source.image, depth, t_st, k)
        else:
            image, _, _ = warp.synthesize(source.image, t_st, k, model)
        formats.write_png(out / f"{i:04d}.png", image)
    print(f"rendered {len(poses)} frames to {out}")
    return 0


def cmd_orbit(args) -> int:
    spec = scenes.random_scene(args.scene_seed)
    model = _load_model_or_fail(args.checkpoint) if args.checkpoint else None
    size = model.config.image_size if model else args.image_size
    k = scenes.default_intrinsics(size)
    src_pose = scenes.orbit_pose(0.0, args.elevation)
    source = scenes.raycast(spec, src_pose, k)
    half = (args.views - 1) / 2.0
    frames = []
    for i in range(args.views):
        angle = (i - half) * args.step
        tgt_pose = scenes.orbit_pose(angle, args.elevation)
        t_st = geometry.relative_transform(src_pose, tgt_pose)
        if model is None:
            depth = scenes.raycast(spec, tgt_pose, k).depth
            image, _ = warp.synthesize_oracle(source.image, depth, t_st, k)
        else:
            image, _, _ = warp.synthesize(source.image, t_st, k, model,
                                          d_azimuth_deg=angle, d_elevation_deg=0.0)
        frames.append(image)
    overlay = np.mean(frames, axis=0)
    formats.write_png(args.overlay, overlay)
    print(f"overlaid {len(frames)} views into {args.overlay}")
    return 0


def cmd_gradcheck(args) -> int:
    results = checks.run_all(args.seed or 0)
    worst = 0.0
    for name, err in sorted(results.items()):
        status = "ok" if err < checks.GRADCHECK_LIMIT else "FAIL"
        print(f"{name:28s} {err:.3e} {status}")
        worst = max(worst, err)
    if worst >= checks.GRADCHECK_LIMIT:
        print(f"error: gradcheck: worst relative error {worst:.3e} "
              f">= {checks.GRADCHECK_LIMIT}", file=sys.stderr)
        return 1
    return 0


def cmd_interpolate(args) -> int:
    model = _load_model_or_fail(args.checkpoint)
    k = scenes.default_intrinsics(model.config.image_size)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    image_a = scenes.raycast(scenes.random_scene(args.seed_a), scenes.orbit_pose(0, 0), k).image
    image_b = scenes.raycast(scenes.random_scene(args.seed_b), scenes.orbit_pose(0, 0), k).image
    za = model.encode(image_a)
    zb = model.encode(image_b)
    cfg = model.config
    for i in range(args.steps):
        alpha = i / (args.steps - 1) if args.steps > 1 else 0.0
        z = interpolate_latents(za, zb, alpha)
        depth = model.decode_depth(z).data
        formats.write_pfm(out / f"depth_{i:02d}.pfm", depth)
        formats.write_png(out / f"depth_{i:02d}.png",
                          formats.depth_to_image(depth, cfg.d_min, cfg.d_max))
    print(f"wrote {args.steps} interpolated depth maps to {out}")
    return 0


def cmd_gen_data(args) -> int:
    out = Path(args.out)
    k = scenes.default_intrinsics(args.image_size)
    for s in range(args.scenes):
        scene_dir = out / f"scene_{s:03d}"
        if args.kind == "corridor":
            spec = scenes.corridor_scene(args.seed + s)
            pairs = list(scenes.forward_track_pairs(spec, k, step=0.05, count=19))
            samples = [pairs[0].source] + [p.target for p in pairs]
        else:
            spec = scenes.random_scene(args.seed + s)
            samples = [v for _, _, v in scenes.orbit_views(spec, k)]
        scenes.export_dataset(samples, scene_dir)
    print(f"exported {args.scenes} scenes x {len(samples)} views to {out}")
    return 0


def resolve_bind(host_flag, port_flag, env: dict) -> tuple[str, int]:
    """Bind address from VIEWSYNTH_ADDR ("host:port"); CLI flags override."""
    addr = env.get("VIEWSYNTH_ADDR", "127.0.0.1:8000")
    env_host, _, env_port = addr.partition(":")
    host = host_flag if host_flag is not None else (env_host or "127.0.0.1")
    try:
        port = port_flag if port_flag is not None else int(env_port or 8000)
    except ValueError:
        raise CliError(f"VIEWSYNTH_ADDR: bad port in {addr!r}")
    return host, port


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    host, port = resolve_bind(args.host, args.port, os.environ)
    app = create_app(checkpoint=args.checkpoint)
    uvicorn.run(app, host=host, port=port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="viewsynth",
        description="continuous novel-view synthesis: train, evaluate, and serve",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model on procedural view pairs")
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--variant", choices=("full", "no_tae", "no_depth"), default=None)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="depth/flow/reconstruction metrics on held-out scenes")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default="eval.csv")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="fine-grained azimuth sweep around a source view")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--range", type=float, default=40.0)
    p.add_argument("--step", type=float, default=1.0)
    p.add_argument("--scene-seed", type=int, default=50000)
    p.add_argument("--elevation", type=float, default=0.0)
    p.add_argument("--out", default="sweep.csv")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("render", help="render frames along a pose file")
    p.add_argument("--poses", required=True, help="12-numbers-per-line pose file")
    p.add_argument("--out", required=True)
    p.add_argument("--checkpoint", default=None, help="learned model (omit for oracle warp)")
    p.add_argument("--scene-seed", type=int, default=0)
    p.add_argument("--image-size", type=int, default=64)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("orbit", help="overlay a fan of continuous views")
    p.add_argument("--views", type=int, default=80)
    p.add_argument("--step", type=float, default=1.0)
    p.add_argument("--overlay", required=True, help="output composite image")
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--scene-seed", type=int, default=0)
    p.add_argument("--elevation", type=float, default=0.0)
    p.add_argument("--image-size", type=int, default=64)
    p.set_defaults(func=cmd_orbit)

    p = sub.add_parser("gradcheck", help="finite-difference checks for every op")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("interpolate", help="decode interpolated latents to depth maps")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--seed-a", type=int, default=50001)
    p.add_argument("--seed-b", type=int, default=50002)
    p.add_argument("--steps", type=int, default=5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_interpolate)

    p = sub.add_parser("gen-data", help="export raycast datasets (PNG + PFM + poses)")
    p.add_argument("--out", required=True)
    p.add_argument("--scenes", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--image-size", type=int, default=64)
    p.add_argument("--kind", choices=("object", "corridor"), default="object")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("serve", help="start the frame-streaming service")
    p.add_argument("--host", default=None)
    p.add_argument("--port", type=int, default=None)
    p.add_argument("--checkpoint", default=None)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (formats.FormatError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
