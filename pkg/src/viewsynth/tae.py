"""Transforming autoencoder: image -> latent 3D point set -> rigid transform
in latent space -> target-view depth map (or direct flow, for the ablation
variants)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import formats
from .autodiff import ParameterStore, ShapeError, Tensor
from .geometry import CameraIntrinsics, RigidTransform, invert
from .warp import FlowTensor, depth_to_flow_diff

VARIANTS = ("full", "no_tae", "no_depth")
VIEW_FEATURE_DIM = 7  # cos/sin azimuth, cos/sin elevation, translation


@dataclass
class ViewChange:
    """Relative viewpoint change between a source and a target camera.

    transform maps source-camera coordinates into the target camera. The
    azimuth/elevation deltas feed the flattened-view ablation; when they are
    not known they are recovered from the rotation (yaw-then-pitch
    decomposition), which is exact for orbit-rig transforms."""

    transform: RigidTransform
    d_azimuth_deg: float | None = None
    d_elevation_deg: float | None = None

    def angles_rad(self) -> tuple[float, float]:
        if self.d_azimuth_deg is not None and self.d_elevation_deg is not None:
            return np.deg2rad(self.d_azimuth_deg), np.deg2rad(self.d_elevation_deg)
        r = self.transform.r
        yaw = float(np.arctan2(r[0, 2], r[0, 0]))
        pitch = float(np.arctan2(r[2, 1], r[1, 1]))
        return yaw, pitch

    def features(self) -> np.ndarray:
        az, el = self.angles_rad()
        t = self.transform.t
        return np.array(
            [np.cos(az), np.sin(az), np.cos(el), np.sin(el), t[0], t[1], t[2]],
            dtype=np.float32,
        )


@dataclass(frozen=True)
class TaeConfig:
    variant: str = "full"
    image_size: int = 32
    latent_points: int = 128
    channels: tuple = (16, 32, 64, 128)
    d_min: float = 0.5
    d_max: float = 6.0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}, expected one of {VARIANTS}")
        size = self.image_size
        if size < 16 or (size & (size - 1)) != 0:
            raise ValueError(f"image_size must be a power of two >= 16, got {size}")
        if self.latent_points < 4:
            raise ValueError(f"latent_points must be >= 4, got {self.latent_points}")
        if not (0 < self.d_min < self.d_max):
            raise ValueError(f"need 0 < d_min < d_max, got ({self.d_min}, {self.d_max})")
        if 2 ** len(self.channels) >= size:
            raise ValueError("too many stride-2 blocks for this image size")

    @property
    def latent_dim(self) -> int:
        return 3 * self.latent_points

    @property
    def grid_size(self) -> int:
        return self.image_size // 2 ** len(self.channels)

    def to_mapping(self) -> dict:
        return {
            "variant": self.variant,
            "image_size": self.image_size,
            "latent_points": self.latent_points,
            "channels": ",".join(str(c) for c in self.channels),
            "d_min": repr(self.d_min),
            "d_max": repr(self.d_max),
        }

    @staticmethod
    def from_mapping(m: dict) -> "TaeConfig":
        return TaeConfig(
            variant=m.get("variant", "full"),
            image_size=int(m.get("image_size", 32)),
            latent_points=int(m.get("latent_points", 128)),
            channels=tuple(int(c) for c in str(m.get("channels", "16,32,64,128")).split(",")),
            d_min=float(m.get("d_min", 0.5)),
            d_max=float(m.get("d_max", 6.0)),
        )


def transform_latent(z: Tensor, transforms) -> Tensor:
    """Apply rigid transforms to latent points: each point p -> R p + t.
    z is (n, 3) with a single transform, or (N, n, 3) with one per sample.
    The gradient w.r.t. the points is R^T per point."""
    single = z.data.ndim == 2
    if z.data.shape[-1] != 3:
        raise ShapeError(f"transform_latent: points must be (..., 3), got {z.data.shape}")
    if single:
        tlist = [transforms] if isinstance(transforms, RigidTransform) else list(transforms)
        if len(tlist) != 1:
            raise ShapeError("transform_latent: one transform expected for a single point set")
    else:
        tlist = (
            [transforms] * z.data.shape[0]
            if isinstance(transforms, RigidTransform)
            else list(transforms)
        )
        if len(tlist) != z.data.shape[0]:
            raise ShapeError(
                f"transform_latent: {len(tlist)} transforms for batch of {z.data.shape[0]}"
            )
    batch = z.data[None] if single else z.data
    out = np.empty_like(batch)
    for i, t in enumerate(tlist):
        out[i] = batch[i] @ t.r.T.astype(batch.dtype) + t.t.astype(batch.dtype)

    def backward(g):
        gb = g[None] if single else g
        gz = np.empty_like(gb)
        for i, t in enumerate(tlist):
            gz[i] = gb[i] @ t.r.astype(gb.dtype)
        return (gz[0] if single else gz,)

    return ad.record("transform_latent", [z], out[0] if single else out, backward)


def interpolate_latents(za: Tensor, zb: Tensor, alpha: float) -> Tensor:
    if za.data.shape != zb.data.shape:
        raise ShapeError(
            f"interpolate_latents: shape mismatch {za.data.shape} vs {zb.data.shape}"
        )
    return ad.add(ad.mul(za, 1.0 - alpha), ad.mul(zb, alpha))


class TaeModel:
    """Encoder-decoder with an explicitly transformable latent.

    Encoder: stride-2 conv blocks (leaky relu 0.2) + linear head.
    Decoder: linear layer reshaped to a spatial grid + mirrored transposed
    convs. The depth head squashes into (d_min, d_max) with a scaled sigmoid;
    the direct-flow head emits in-frame coordinates the same way.
    """

    def __init__(self, config: TaeConfig, seed: int = 0,
                 store: ParameterStore | None = None):
        self.config = config
        self.store = store if store is not None else ParameterStore()
        if store is None:
            self._init_params(np.random.default_rng(seed))

    # -- parameters ---------------------------------------------------------

    def _init_params(self, rng):
        cfg = self.config
        chans = (3,) + tuple(cfg.channels)
        for i in range(len(cfg.channels)):
            cin, cout = chans[i], chans[i + 1]
            self.store.add(f"enc.conv{i}.w",
                           ad.kaiming_uniform(rng, (cout, cin, 3, 3), fan_in=cin * 9))
            self.store.add(f"enc.conv{i}.b", np.zeros(cout, dtype=np.float32))
        flat = cfg.channels[-1] * cfg.grid_size ** 2
        self.store.add("enc.fc.w", ad.kaiming_uniform(rng, (flat, cfg.latent_dim), fan_in=flat))
        self.store.add("enc.fc.b", np.zeros(cfg.latent_dim, dtype=np.float32))

        dec_in = cfg.latent_dim + (VIEW_FEATURE_DIM if cfg.variant == "no_tae" else 0)
        self.store.add("dec.fc.w", ad.kaiming_uniform(rng, (dec_in, flat), fan_in=dec_in))
        self.store.add("dec.fc.b", np.zeros(flat, dtype=np.float32))
        out_ch = 2 if cfg.variant == "no_depth" else 1
        dec_chans = tuple(reversed(cfg.channels)) + (out_ch,)
        for i in range(len(cfg.channels)):
            cin, cout = dec_chans[i], dec_chans[i + 1]
            self.store.add(f"dec.tconv{i}.w",
                           ad.kaiming_uniform(rng, (cin, cout, 4, 4), fan_in=cin * 16))
            self.store.add(f"dec.tconv{i}.b", np.zeros(cout, dtype=np.float32))

    # -- stages -------------------------------------------------------------

    def _check_images(self, images: Tensor):
        cfg = self.config
        if images.data.ndim != 4 or images.data.shape[1] != 3 \
                or images.data.shape[2:] != (cfg.image_size, cfg.image_size):
            raise ShapeError(
                f"expected images (N, 3, {cfg.image_size}, {cfg.image_size}), "
                f"got {images.data.shape}"
            )

    def encode_batch(self, images: Tensor) -> Tensor:
        """(N, 3, H, W) -> latent point sets (N, n, 3), or flat (N, 3n) codes
        for the flattened-view variant."""
        self._check_images(images)
        h = images
        for i in range(len(self.config.channels)):
            h = ad.conv2d(h, self.store[f"enc.conv{i}.w"], self.store[f"enc.conv{i}.b"],
                          stride=2, padding=1)
            h = ad.leaky_relu(h, 0.2)
        n = images.data.shape[0]
        h = ad.reshape(h, (n, h.data.size // n))
        z = ad.add(ad.matmul(h, self.store["enc.fc.w"]), self.store["enc.fc.b"])
        if self.config.variant == "no_tae":
            return z
        return ad.reshape(z, (n, self.config.latent_points, 3))

    def encode(self, image: np.ndarray) -> Tensor:
        """Single HxWx3 image -> (n, 3) latent point set ((3n,) when the
        variant keeps a flat code)."""
        img = np.asarray(image, dtype=np.float32)
        if img.ndim != 3 or img.shape[2] != 3:
            raise ShapeError(f"encode expects HxWx3, got {img.shape}")
        z = self.encode_batch(Tensor(img.transpose(2, 0, 1)[None]))
        return ad.reshape(z, z.data.shape[1:])

    def _decode_raw(self, code: Tensor) -> Tensor:
        cfg = self.config
        n = code.data.shape[0]
        h = ad.add(ad.matmul(code, self.store["dec.fc.w"]), self.store["dec.fc.b"])
        h = ad.leaky_relu(h, 0.2)
        h = ad.reshape(h, (n, cfg.channels[-1], cfg.grid_size, cfg.grid_size))
        for i in range(len(cfg.channels)):
            h = ad.transposed_conv2d(h, self.store[f"dec.tconv{i}.w"],
                                     self.store[f"dec.tconv{i}.b"], stride=2, padding=1)
            if i < len(cfg.channels) - 1:
                h = ad.leaky_relu(h, 0.2)
        return h

    def decode_depth(self, z: Tensor) -> Tensor:
        """Latent points (or view-augmented code) -> depth map strictly inside
        (d_min, d_max). Returns (N, H, W), or (H, W) for a single point set."""
        cfg = self.config
        single = z.data.ndim == 2 and cfg.variant != "no_tae"
        code = z
        if single:
            code = ad.reshape(z, (1, z.data.size))
        elif z.data.ndim == 3:
            code = ad.reshape(z, (z.data.shape[0], cfg.latent_dim))
        raw = self._decode_raw(code)
        n = raw.data.shape[0]
        raw = ad.reshape(raw, (n, cfg.image_size, cfg.image_size))
        depth = ad.add(ad.mul(ad.sigmoid(raw), cfg.d_max - cfg.d_min), cfg.d_min)
        if single:
            return ad.reshape(depth, (cfg.image_size, cfg.image_size))
        return depth

    def decode_flow_direct(self, z: Tensor) -> Tensor:
        """Direct correspondence decoding for the no-depth ablation:
        (N, n, 3) -> (N, H, W, 2) in-frame source coordinates."""
        cfg = self.config
        code = ad.reshape(z, (z.data.shape[0], cfg.latent_dim))
        raw = self._decode_raw(code)                       # (N, 2, H, W)
        scale = np.array([cfg.image_size - 1], dtype=np.float32)
        coords = ad.mul(ad.sigmoid(raw), Tensor(scale))
        return ad.transpose(coords, (0, 2, 3, 1))

    # -- composed geometry prediction ---------------------------------------

    def predict_geometry(self, sources: Tensor, view_changes, k: CameraIntrinsics):
        """Predict (depth, flow) for a batch of source images and viewpoint
        changes; depth is None for the direct-flow variant."""
        cfg = self.config
        if (k.height, k.width) != (cfg.image_size, cfg.image_size):
            raise ShapeError(
                f"intrinsics {k.width}x{k.height} do not match model size {cfg.image_size}"
            )
        view_changes = list(view_changes)
        if len(view_changes) != sources.data.shape[0]:
            raise ShapeError(
                f"{len(view_changes)} view changes for batch of {sources.data.shape[0]}"
            )
        z = self.encode_batch(sources)
        t_ts = [invert(vc.transform) for vc in view_changes]
        if cfg.variant == "full":
            zt = transform_latent(z, [vc.transform for vc in view_changes])
            depth = self.decode_depth(zt)
            return depth, depth_to_flow_diff(depth, k, t_ts)
        if cfg.variant == "no_tae":
            feats = Tensor(np.stack([vc.features() for vc in view_changes]))
            depth = self.decode_depth(ad.concat([z, feats], axis=1))
            return depth, depth_to_flow_diff(depth, k, t_ts)
        zt = transform_latent(z, [vc.transform for vc in view_changes])
        coords = self.decode_flow_direct(zt)
        valid = np.ones(coords.data.shape[:-1], dtype=bool)
        return None, FlowTensor(coords, valid)

    def forward_variant(self, image: np.ndarray, view: ViewChange,
                        k: CameraIntrinsics | None = None):
        """Single-sample depth (full / no_tae) or flow (no_depth) prediction,
        as plain arrays."""
        from .scenes import default_intrinsics

        if k is None:
            k = default_intrinsics(self.config.image_size)
        src = Tensor(np.asarray(image, dtype=np.float32).transpose(2, 0, 1)[None])
        depth, flow = self.predict_geometry(src, [view], k)
        if self.config.variant == "no_depth":
            return flow.coords.data[0]
        return depth.data[0]

    # -- persistence ---------------------------------------------------------

    def snapshot(self) -> "TaeModel":
        """Read-only copy safe to share across threads (no optimizer state)."""
        clone = TaeModel(self.config, store=ParameterStore())
        for name, value in self.store.snapshot().items():
            clone.store.add(name, value)
        return clone


def sidecar_path(checkpoint_path) -> str:
    return str(checkpoint_path) + ".cfg"


def save_model(path, model: TaeModel) -> None:
    ad.save_checkpoint(path, model.store)
    formats.write_config(sidecar_path(path), model.config.to_mapping())


def load_model(path) -> TaeModel:
    config = TaeConfig.from_mapping(formats.read_config(sidecar_path(path)))
    model = TaeModel(config, seed=0)
    model.store.load_values(ad.load_checkpoint(path))
    return model
