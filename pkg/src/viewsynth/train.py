"""End-to-end training on procedural view pairs: sample pairs, run the
synthesis pipeline, minimize the per-pixel L1 reconstruction loss."""

from __future__ import annotations

import csv
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import geometry, metrics, scenes, warp
from .autodiff import Tape, Tensor
from .scenes import OrbitProtocol, PairSample, orbit_pose
from .tae import TaeConfig, TaeModel, ViewChange, save_model

# validation scene seeds live in a disjoint block above the training seeds
_SCENE_BLOCK = 100_000
_VAL_OFFSET = 50_000


class TrainError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    variant: str = "full"
    image_size: int = 32
    latent_points: int = 128
    channels: tuple = (16, 32, 64, 128)
    d_min: float = 0.5
    d_max: float = 6.0
    scene_count: int = 6
    val_scene_count: int = 2
    pairs_per_epoch: int = 384
    epochs: int = 25
    batch_size: int = 8
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    checkpoint_interval: int = 10
    val_pairs: int = 48
    seed: int = 0
    azimuth_step_deg: float = 20.0
    elevation_max_deg: float = 30.0
    elevation_step_deg: float = 10.0
    max_pair_azimuth_deg: float = 40.0
    orbit_radius: float = 3.0

    def __post_init__(self):
        for name in ("scene_count", "val_scene_count", "pairs_per_epoch", "epochs",
                     "batch_size", "checkpoint_interval", "val_pairs"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.scene_count + self.val_scene_count >= _VAL_OFFSET:
            raise ValueError("too many scenes for the disjoint seed blocks")

    def tae_config(self) -> TaeConfig:
        return TaeConfig(
            variant=self.variant, image_size=self.image_size,
            latent_points=self.latent_points, channels=tuple(self.channels),
            d_min=self.d_min, d_max=self.d_max,
        )

    def protocol(self) -> OrbitProtocol:
        return OrbitProtocol(
            azimuth_step_deg=self.azimuth_step_deg,
            elevation_max_deg=self.elevation_max_deg,
            elevation_step_deg=self.elevation_step_deg,
            max_pair_azimuth_deg=self.max_pair_azimuth_deg,
            radius=self.orbit_radius,
        )

    def train_scene_seeds(self) -> list[int]:
        base = self.seed * _SCENE_BLOCK
        return [base + i for i in range(self.scene_count)]

    def val_scene_seeds(self) -> list[int]:
        base = self.seed * _SCENE_BLOCK + _VAL_OFFSET
        return [base + i for i in range(self.val_scene_count)]

    def to_mapping(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "channels":
                v = ",".join(str(c) for c in v)
            out[f.name] = v
        return out

    @staticmethod
    def from_mapping(m: dict) -> "TrainConfig":
        known = {f.name: f for f in fields(TrainConfig)}
        unknown = set(m) - set(known)
        if unknown:
            raise ValueError(f"unknown config key {sorted(unknown)[0]!r}")
        kwargs = {}
        for name, raw in m.items():
            if name == "variant":
                kwargs[name] = str(raw)
            elif name == "channels":
                kwargs[name] = tuple(int(c) for c in str(raw).split(","))
            elif known[name].type in ("int", int):
                kwargs[name] = int(raw)
            else:
                kwargs[name] = float(raw)
        return TrainConfig(**kwargs)


@dataclass
class TrainResult:
    model: TaeModel
    epoch_rows: list            # (epoch, train_l1, val_l1)
    baseline_l1: float
    first_batch_loss: float
    checkpoint_path: str | None


def _pair_pool(config: TrainConfig, seeds: list[int]):
    k = scenes.default_intrinsics(config.image_size)
    protocol = config.protocol()
    pool: list[PairSample] = []
    for seed in seeds:
        spec = scenes.random_scene(seed)
        pool.extend(scenes.orbit_pairs(spec, k, protocol))
    return pool


def _batch_tensors(pairs: list[PairSample]):
    src = np.stack([p.source.image.transpose(2, 0, 1) for p in pairs]).astype(np.float32)
    tgt = np.stack([p.target.image.transpose(2, 0, 1) for p in pairs]).astype(np.float32)
    views = [
        ViewChange(p.transform, d_azimuth_deg=p.d_azimuth_deg,
                   d_elevation_deg=p.d_elevation_deg)
        for p in pairs
    ]
    return Tensor(src), Tensor(tgt), views


def copy_source_baseline(pairs: list[PairSample]) -> float:
    return float(np.mean([metrics.l1_image(p.source.image, p.target.image) for p in pairs]))


def evaluate_pairs(model: TaeModel, pairs: list[PairSample], batch_size: int = 16) -> float:
    """Mean reconstruction L1 of the model over the given pairs (no tape)."""
    k = scenes.default_intrinsics(model.config.image_size)
    losses = []
    for i in range(0, len(pairs), batch_size):
        chunk = pairs[i : i + batch_size]
        src, tgt, views = _batch_tensors(chunk)
        result = warp.synthesize_batch(model, src, views, k)
        losses.append(np.abs(result["pred"].data - tgt.data).mean())
    return float(np.mean(losses))


def train(config: TrainConfig, out_dir=None, log=None) -> TrainResult:
    """Train from scratch; writes metrics.csv and checkpoints under out_dir
    when given. Fully reproducible from config.seed."""
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    k = scenes.default_intrinsics(config.image_size)
    model = TaeModel(config.tae_config(), seed=config.seed)
    train_pool = _pair_pool(config, config.train_scene_seeds())
    # validation measures novel-view quality: self-pairs excluded
    val_pool = [
        p for p in _pair_pool(config, config.val_scene_seeds())
        if abs(p.d_azimuth_deg) + abs(p.d_elevation_deg) > 1e-9
    ]
    val_rng = np.random.default_rng(config.seed + 1)
    val_idx = val_rng.choice(len(val_pool), size=min(config.val_pairs, len(val_pool)),
                             replace=False)
    val_pairs = [val_pool[i] for i in val_idx]
    baseline = copy_source_baseline(val_pairs)

    rng = np.random.default_rng(config.seed)
    rows = []
    first_batch_loss = None
    ckpt_path = None
    csv_file = None
    writer = None
    if out is not None:
        csv_file = open(out / "metrics.csv", "w", newline="")
        writer = csv.writer(csv_file)
        writer.writerow(["epoch", "train_l1", "val_l1"])

    try:
        for epoch in range(1, config.epochs + 1):
            order = rng.integers(0, len(train_pool), size=config.pairs_per_epoch)
            epoch_losses = []
            for start in range(0, len(order), config.batch_size):
                batch = [train_pool[i] for i in order[start : start + config.batch_size]]
                src, tgt, views = _batch_tensors(batch)
                with Tape() as tape:
                    result = warp.synthesize_batch(model, src, views, k)
                    loss = ad.l1_loss(result["pred"], tgt)
                    loss_val = float(loss.data)
                    # non-finite depth/flow would launder into a finite loss
                    # through the behind-camera sentinel; guard them directly
                    diverged = not np.isfinite(loss_val) \
                        or not np.isfinite(result["flow"].coords.data).all() \
                        or (result["depth"] is not None
                            and not np.isfinite(result["depth"].data).all())
                    if diverged:
                        raise TrainError(
                            f"non-finite loss or intermediates at epoch {epoch}, "
                            f"batch offset {start} (loss {loss_val})"
                        )
                    tape.backward(loss, model.store)
                ad.adam_step(model.store, lr=config.lr, beta1=config.beta1,
                             beta2=config.beta2, eps=config.adam_eps)
                if first_batch_loss is None:
                    first_batch_loss = loss_val
                epoch_losses.append(loss_val)
            val_l1 = evaluate_pairs(model, val_pairs)
            row = (epoch, float(np.mean(epoch_losses)), val_l1)
            rows.append(row)
            if writer is not None:
                writer.writerow([row[0], f"{row[1]:.9g}", f"{row[2]:.9g}"])
                csv_file.flush()
            if log is not None:
                log(f"epoch {epoch}/{config.epochs}  train_l1 {row[1]:.4f}  "
                    f"val_l1 {val_l1:.4f}  baseline {baseline:.4f}")
            if out is not None and (epoch % config.checkpoint_interval == 0
                                    or epoch == config.epochs):
                ckpt_path = str(out / f"model_ep{epoch:03d}.nvsc")
                save_model(ckpt_path, model)
    finally:
        if csv_file is not None:
            csv_file.close()

    if out is not None:
        ckpt_path = str(out / "model.nvsc")
        save_model(ckpt_path, model)
    return TrainResult(model=model, epoch_rows=rows, baseline_l1=baseline,
                       first_batch_loss=first_batch_loss, checkpoint_path=ckpt_path)


# ---------------------------------------------------------------------------
# evaluation protocols

def evaluate_sweep(model: TaeModel, spec, degrees_range: float, step_deg: float,
                   source_azimuth_deg: float = 0.0, elevation_deg: float = 0.0,
                   radius: float = scenes.DEFAULT_ORBIT_RADIUS):
    """Fine-grained azimuth sweep around a source view: rows of
    (angle, L1, SSIM) against raycast ground truth."""
    k = scenes.default_intrinsics(model.config.image_size)
    src_pose = orbit_pose(source_azimuth_deg, elevation_deg, radius)
    source = scenes.raycast(spec, src_pose, k)
    angles = np.arange(-degrees_range, degrees_range + step_deg / 2.0, step_deg)
    rows = []
    for angle in angles:
        tgt_pose = orbit_pose(source_azimuth_deg + angle, elevation_deg, radius)
        truth = scenes.raycast(spec, tgt_pose, k)
        t_st = geometry.relative_transform(src_pose, tgt_pose)
        pred, _, _ = warp.synthesize(source.image, t_st, k, model,
                                     d_azimuth_deg=float(angle), d_elevation_deg=0.0)
        rows.append((float(angle), metrics.l1_image(pred, truth.image),
                     metrics.ssim(pred, truth.image)))
    return rows


def evaluate_depth_flow(model: TaeModel, pairs: list[PairSample], delta: float = 1.05):
    """Flow and depth prediction quality against the scene oracle, restricted
    to flow-valid, mutually visible pixels."""
    k = scenes.default_intrinsics(model.config.image_size)
    flow_l1, flow_acc, depth_l1, depth_acc = [], [], [], []
    for pair in pairs:
        t_ts = geometry.invert(pair.transform)
        oracle_flow = geometry.depth_to_flow(pair.target.depth, k, t_ts)
        visible = scenes.visibility_mask(pair.source, pair.target)
        src, _, views = _batch_tensors([pair])
        depth_t, flow_t = model.predict_geometry(src, views, k)
        pred_coords = flow_t.coords.data[0].astype(np.float64)
        mask = oracle_flow.valid & visible & flow_t.valid[0]
        if mask.sum() == 0:
            continue
        gt = oracle_flow.coords[mask]
        pd = pred_coords[mask]
        flow_l1.append(np.abs(gt - pd).mean())
        positive = (gt > 0).all(axis=-1) & (pd > 0).all(axis=-1)
        if positive.any():
            ratio = np.maximum(pd[positive] / gt[positive], gt[positive] / pd[positive])
            flow_acc.append((ratio < delta).all(axis=-1).mean())
        if depth_t is not None:
            gt_d = pair.target.depth.values[mask]
            pd_d = depth_t.data[0].astype(np.float64)[mask]
            depth_l1.append(np.abs(gt_d - pd_d).mean())
            ratio = np.maximum(pd_d / gt_d, gt_d / pd_d)
            depth_acc.append((ratio < delta).mean())
    out = {
        "flow_l1": float(np.mean(flow_l1)),
        "flow_acc": float(np.mean(flow_acc)),
    }
    if depth_l1:
        out["depth_l1"] = float(np.mean(depth_l1))
        out["depth_acc"] = float(np.mean(depth_acc))
    return out


def snapping_ratio(sweep_rows, grid_step_deg: float = 20.0) -> float:
    """Mean L1 at non-grid angles divided by mean L1 at training-grid angles
    (the sharper a model snaps to training views, the larger this gets)."""
    grid, off_grid = [], []
    for angle, l1, _ in sweep_rows:
        if abs(angle) < 1e-9:
            continue  # 0 deg is self-reconstruction, not a trained view change
        if abs(angle % grid_step_deg) < 1e-9 or abs(angle % grid_step_deg - grid_step_deg) < 1e-9:
            grid.append(l1)
        else:
            off_grid.append(l1)
    return float(np.mean(off_grid) / np.mean(grid))
