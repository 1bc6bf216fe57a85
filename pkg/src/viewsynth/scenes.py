"""Procedural raycast scenes with analytic ground truth.

Generates (image, depth, pose) triples for textured sphere/box/plane layouts
under Lambertian shading with a light fixed in the world frame, so appearance
is view-independent up to visibility. Serves as both the training data source
and the oracle for every geometric test.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import formats
from .geometry import (
    CameraIntrinsics,
    DepthMap,
    RigidTransform,
    bilinear_lookup,
    camera_rays,
    invert,
    look_at,
    relative_transform,
    rot_x,
    rot_y,
)

DEFAULT_D_MIN = 0.5
DEFAULT_D_MAX = 6.0
DEFAULT_ORBIT_RADIUS = 3.0

_RAY_EPS = 1e-6
_AMBIENT = 0.35


@dataclass(frozen=True)
class Texture:
    kind: str                      # checker | stripes | gradient
    color_a: tuple = (0.9, 0.9, 0.9)
    color_b: tuple = (0.1, 0.1, 0.1)
    scale: float = 0.5
    axis: int = 0                  # stripes / gradient direction (local frame)

    def albedo(self, points: np.ndarray) -> np.ndarray:
        """Per-point base color; points are in the primitive's local frame so
        the pattern is attached to the surface."""
        a = np.asarray(self.color_a, dtype=np.float64)
        b = np.asarray(self.color_b, dtype=np.float64)
        # tiny bias keeps cell boundaries off axis-aligned surfaces
        p = points + 1e-7
        if self.kind == "checker":
            cells = np.floor(p / self.scale).astype(np.int64).sum(axis=-1)
            return np.where((cells % 2 == 0)[..., None], a, b)
        if self.kind == "stripes":
            cells = np.floor(p[..., self.axis] / self.scale).astype(np.int64)
            return np.where((cells % 2 == 0)[..., None], a, b)
        if self.kind == "gradient":
            u = np.clip((p[..., self.axis] / self.scale + 1.0) / 2.0, 0.0, 1.0)
            return a + (b - a) * u[..., None]
        raise ValueError(f"unknown texture kind {self.kind!r}")


@dataclass(frozen=True)
class Primitive:
    kind: str                      # sphere | box | plane
    pose: RigidTransform           # local-to-world
    size: tuple                    # sphere: (radius,); box: half extents; plane: (half_w, half_h)
    texture: Texture

    def __post_init__(self):
        if self.kind not in ("sphere", "box", "plane"):
            raise ValueError(f"unknown primitive kind {self.kind!r}")
        if any(s <= 0 for s in self.size):
            raise ValueError(f"primitive sizes must be positive, got {self.size}")


@dataclass(frozen=True)
class SceneSpec:
    # black background: pixels that warp from outside the source frame read
    # as zero, which then matches the backdrop instead of punching dark holes
    seed: int
    primitives: tuple
    background: tuple = (0.0, 0.0, 0.0)
    light_dir: tuple = (-0.45, -0.7, 0.35)

    def __post_init__(self):
        if not self.primitives:
            raise ValueError("scene needs at least one primitive")


@dataclass
class ViewSample:
    image: np.ndarray              # H x W x 3 in [0,1]
    depth: DepthMap
    pose: RigidTransform           # camera-to-world
    intrinsics: CameraIntrinsics
    scene_seed: int | None = None


def default_intrinsics(image_size: int) -> CameraIntrinsics:
    return CameraIntrinsics(
        fx=float(image_size), fy=float(image_size),
        cx=(image_size - 1) / 2.0, cy=(image_size - 1) / 2.0,
        width=image_size, height=image_size,
    )


# ---------------------------------------------------------------------------
# ray / primitive intersection (vectorized over ray bundles of any shape)

def _intersect(prim: Primitive, origins: np.ndarray, dirs: np.ndarray):
    """Nearest intersection parameter s (inf where missed) plus local hit
    points and world normals."""
    inv = invert(prim.pose)
    o = origins @ inv.r.T + inv.t
    d = dirs @ inv.r.T
    with np.errstate(divide="ignore", invalid="ignore"):
        if prim.kind == "sphere":
            r = prim.size[0]
            a = (d * d).sum(-1)
            b = 2.0 * (o * d).sum(-1)
            c = (o * o).sum(-1) - r * r
            disc = b * b - 4.0 * a * c
            root = np.sqrt(np.maximum(disc, 0.0))
            s0 = (-b - root) / (2.0 * a)
            s1 = (-b + root) / (2.0 * a)
            s = np.where(s0 > _RAY_EPS, s0, s1)
            s = np.where((disc >= 0) & (s > _RAY_EPS), s, np.inf)
            p_local = o + s[..., None] * d
            n_local = p_local / np.maximum(np.linalg.norm(p_local, axis=-1, keepdims=True), 1e-12)
        elif prim.kind == "box":
            h = np.asarray(prim.size, dtype=np.float64)
            t1 = (-h - o) / d
            t2 = (h - o) / d
            tmin = np.minimum(t1, t2).max(axis=-1)
            tmax = np.maximum(t1, t2).min(axis=-1)
            s = np.where(tmin > _RAY_EPS, tmin, tmax)
            s = np.where((tmax >= tmin) & (s > _RAY_EPS), s, np.inf)
            p_local = o + s[..., None] * d
            scaled = p_local / h
            axis = np.argmax(np.abs(scaled), axis=-1)
            n_local = np.zeros_like(p_local)
            idx = np.indices(axis.shape)
            n_local[(*idx, axis)] = np.sign(
                np.take_along_axis(scaled, axis[..., None], axis=-1)[..., 0]
            )
        else:  # plane: local z = 0 rectangle, normal -z (faces approaching rays)
            s = -o[..., 2] / d[..., 2]
            p_local = o + s[..., None] * d
            hw, hh = prim.size
            inside = (np.abs(p_local[..., 0]) <= hw) & (np.abs(p_local[..., 1]) <= hh)
            s = np.where((s > _RAY_EPS) & inside, s, np.inf)
            n_local = np.zeros_like(p_local)
            n_local[..., 2] = -1.0
    n_world = n_local @ prim.pose.r.T
    return s, p_local, n_world


def raycast_rays(spec: SceneSpec, origins: np.ndarray, dirs: np.ndarray,
                 d_max: float = DEFAULT_D_MAX):
    """Shade a bundle of world-frame rays. Returns (colors, depths) where
    depth is the ray parameter s (camera z when dirs have unit camera-z)."""
    origins = np.broadcast_to(np.asarray(origins, dtype=np.float64), dirs.shape)
    best_s = np.full(dirs.shape[:-1], np.inf)
    color = np.broadcast_to(
        np.asarray(spec.background, dtype=np.float64), dirs.shape
    ).copy()
    light = np.asarray(spec.light_dir, dtype=np.float64)
    light = light / np.linalg.norm(light)
    for prim in spec.primitives:
        s, p_local, n_world = _intersect(prim, origins, dirs)
        closer = s < best_s
        if not closer.any():
            continue
        p_local = np.nan_to_num(p_local, nan=0.0, posinf=0.0, neginf=0.0)
        albedo = prim.texture.albedo(p_local)
        lambert = _AMBIENT + (1.0 - _AMBIENT) * np.maximum(0.0, (n_world * -light).sum(-1))
        shaded = albedo * lambert[..., None]
        color = np.where(closer[..., None], shaded, color)
        best_s = np.where(closer, s, best_s)
    hit = np.isfinite(best_s) & (best_s <= d_max)
    color = np.where(hit[..., None], color, np.asarray(spec.background))
    depth = np.where(hit, best_s, d_max)
    return np.clip(color, 0.0, 1.0), depth


def raycast(spec: SceneSpec, pose: RigidTransform, k: CameraIntrinsics,
            d_min: float = DEFAULT_D_MIN, d_max: float = DEFAULT_D_MAX) -> ViewSample:
    """Render one view: per-pixel nearest intersection, Lambertian shading,
    depth = camera-frame z (background reads d_max)."""
    rays_cam = camera_rays(k)
    dirs = rays_cam @ pose.r.T
    color, depth = raycast_rays(spec, pose.t, dirs, d_max=d_max)
    depth = np.clip(depth, d_min, d_max)
    return ViewSample(
        image=color,
        depth=DepthMap(depth, d_min=d_min, d_max=d_max),
        pose=pose,
        intrinsics=k,
        scene_seed=spec.seed,
    )


def raycast_at_pixels(spec: SceneSpec, pose: RigidTransform, k: CameraIntrinsics,
                      xs: np.ndarray, ys: np.ndarray,
                      d_max: float = DEFAULT_D_MAX):
    """Analytic colors/depths along rays through continuous pixel coordinates
    (the resampling-free oracle for correspondence checks)."""
    dirs_cam = np.stack(
        [(xs - k.cx) / k.fx, (ys - k.cy) / k.fy, np.ones_like(xs)], axis=-1
    )
    dirs = dirs_cam @ pose.r.T
    return raycast_rays(spec, pose.t, dirs, d_max=d_max)


# ---------------------------------------------------------------------------
# view protocols

def orbit_pose(azimuth_deg: float, elevation_deg: float,
               radius: float = DEFAULT_ORBIT_RADIUS) -> RigidTransform:
    """Camera-to-world pose on the look-at-origin orbit rig."""
    az = np.deg2rad(azimuth_deg)
    el = np.deg2rad(elevation_deg)
    pos = radius * np.array(
        [np.sin(az) * np.cos(el), -np.sin(el), -np.cos(az) * np.cos(el)]
    )
    return look_at(pos, (0.0, 0.0, 0.0))


@dataclass(frozen=True)
class OrbitProtocol:
    azimuth_step_deg: float = 20.0
    elevation_max_deg: float = 30.0
    elevation_step_deg: float = 10.0
    max_pair_azimuth_deg: float = 40.0
    radius: float = DEFAULT_ORBIT_RADIUS

    def azimuths(self) -> np.ndarray:
        return np.arange(0.0, 360.0, self.azimuth_step_deg)

    def elevations(self) -> np.ndarray:
        return np.arange(0.0, self.elevation_max_deg + 1e-9, self.elevation_step_deg)


@dataclass(frozen=True)
class PairSample:
    source: ViewSample
    target: ViewSample
    transform: RigidTransform      # source-camera -> target-camera
    d_azimuth_deg: float
    d_elevation_deg: float


def orbit_views(spec: SceneSpec, k: CameraIntrinsics,
                protocol: OrbitProtocol = OrbitProtocol()):
    """All grid views plus their (azimuth, elevation) labels."""
    views = []
    for el in protocol.elevations():
        for az in protocol.azimuths():
            pose = orbit_pose(az, el, protocol.radius)
            views.append((float(az), float(el), raycast(spec, pose, k)))
    return views


def _wrapped_diff_deg(a: float, b: float) -> float:
    d = (b - a + 180.0) % 360.0 - 180.0
    return d


def orbit_pairs(spec: SceneSpec, k: CameraIntrinsics,
                protocol: OrbitProtocol = OrbitProtocol()):
    """Every ordered grid-view pair whose azimuth difference is within the
    protocol limit, with the relative source->target transform."""
    views = orbit_views(spec, k, protocol)
    for az_s, el_s, sample_s in views:
        for az_t, el_t, sample_t in views:
            d_az = _wrapped_diff_deg(az_s, az_t)
            if abs(d_az) > protocol.max_pair_azimuth_deg + 1e-9:
                continue
            yield PairSample(
                source=sample_s,
                target=sample_t,
                transform=relative_transform(sample_s.pose, sample_t.pose),
                d_azimuth_deg=d_az,
                d_elevation_deg=el_t - el_s,
            )


def forward_track_pairs(spec: SceneSpec, k: CameraIntrinsics, step: float, count: int,
                        start_pose: RigidTransform | None = None):
    """Pure forward motion: pairs (start view, view after k steps along the
    camera z axis), k = 1..count."""
    if step < 0:
        raise ValueError(f"step must be non-negative, got {step}")
    if start_pose is None:
        start_pose = RigidTransform(np.eye(3), np.array([0.0, 0.0, -3.0]))
    source = raycast(spec, start_pose, k)
    forward = start_pose.r[:, 2]
    for i in range(1, count + 1):
        pose_i = RigidTransform(start_pose.r, start_pose.t + forward * step * i)
        target = raycast(spec, pose_i, k)
        yield PairSample(
            source=source,
            target=target,
            transform=relative_transform(source.pose, pose_i),
            d_azimuth_deg=0.0,
            d_elevation_deg=0.0,
        )


# ---------------------------------------------------------------------------
# occlusion-aware oracle

def visibility_mask(sample_s: ViewSample, sample_t: ViewSample,
                    rel_tol: float = 0.01) -> np.ndarray:
    """True where the target pixel's 3D point reprojects into the source
    frame and the source depth there agrees with the point's source-camera z
    (mutual visibility).

    Background pixels carry the clamped far depth rather than a world
    surface, so their z disagrees across views by construction; sky-onto-sky
    reprojections count as visible."""
    if (
        sample_s.scene_seed is not None
        and sample_t.scene_seed is not None
        and sample_s.scene_seed != sample_t.scene_seed
    ):
        raise ValueError("visibility_mask: samples come from different scenes")
    k = sample_t.intrinsics
    t_ts = relative_transform(sample_t.pose, sample_s.pose)
    points = camera_rays(k) * sample_t.depth.values[..., None]
    q = points @ t_ts.r.T + t_ts.t
    z = q[..., 2]
    front = z > 0
    zsafe = np.where(front, z, 1.0)
    xs = k.fx * q[..., 0] / zsafe + k.cx
    ys = k.fy * q[..., 1] / zsafe + k.cy
    in_frame = front & (xs >= 0) & (xs <= k.width - 1) & (ys >= 0) & (ys <= k.height - 1)
    src_depth = bilinear_lookup(sample_s.depth.values, xs, ys)
    consistent = np.abs(src_depth - z) <= rel_tol * np.abs(zsafe)
    far = sample_t.depth.d_max - 1e-6
    both_background = (sample_t.depth.values >= far) & (src_depth >= far)
    return in_frame & (consistent | both_background)


# ---------------------------------------------------------------------------
# procedural scene generators

# gradient-heavy kinds keep the photometric loss landscape smooth enough for
# warping gradients to reach the right correspondences at toy resolution
_TEXTURE_KINDS = ("gradient", "gradient", "stripes", "stripes", "checker")

_PALETTE = (
    ((0.95, 0.2, 0.15), (0.98, 0.88, 0.35)),
    ((0.12, 0.42, 0.92), (0.92, 0.95, 0.98)),
    ((0.1, 0.66, 0.3), (0.96, 0.9, 0.25)),
    ((0.5, 0.2, 0.8), (0.97, 0.62, 0.2)),
    ((0.9, 0.3, 0.5), (0.18, 0.85, 0.8)),
)


def _random_texture(rng: np.random.Generator) -> Texture:
    kind = _TEXTURE_KINDS[rng.integers(len(_TEXTURE_KINDS))]
    ca, cb = _PALETTE[rng.integers(len(_PALETTE))]
    if rng.random() < 0.5:
        ca, cb = cb, ca
    scale = float(rng.uniform(0.7, 1.3))
    return Texture(kind=kind, color_a=ca, color_b=cb, scale=scale,
                   axis=int(rng.integers(3)))


def random_scene(seed: int) -> SceneSpec:
    """Object-centric scene: one textured primitive near the origin (the
    desk-scale stand-in for a single rendered shape instance)."""
    rng = np.random.default_rng(seed)
    kind = ("sphere", "box")[rng.integers(2)]
    offset = rng.uniform(-0.3, 0.3, 3)
    rot = rot_y(rng.uniform(0, 2 * np.pi)) @ rot_x(rng.uniform(-0.4, 0.4))
    pose = RigidTransform(rot, offset)
    if kind == "sphere":
        size = (float(rng.uniform(0.85, 1.2)),)
    else:
        size = tuple(rng.uniform(0.5, 0.95, 3))
    prim = Primitive(kind=kind, pose=pose, size=size, texture=_random_texture(rng))
    light = tuple(rng.uniform(-1.0, 1.0, 3) - np.array([0.0, 0.5, 0.0]))
    return SceneSpec(seed=seed, primitives=(prim,), light_dir=light)


def corridor_scene(seed: int) -> SceneSpec:
    """Street-like layout for forward motion: ground, two side walls, an end
    box. Camera is expected near the origin looking +z."""
    rng = np.random.default_rng(seed)
    ground = Primitive(
        kind="plane",
        pose=RigidTransform(rot_x(-np.pi / 2), (0.0, 1.0, 2.5)),
        size=(2.5, 3.5),
        texture=Texture("checker", *(_PALETTE[int(rng.integers(len(_PALETTE)))]),
                        scale=0.8),
    )
    walls = []
    for sign in (-1.0, 1.0):
        walls.append(Primitive(
            kind="plane",
            pose=RigidTransform(rot_y(sign * np.pi / 2), (sign * 2.0, 0.0, 2.5)),
            size=(3.5, 1.5),
            texture=Texture("stripes", *(_PALETTE[int(rng.integers(len(_PALETTE)))]),
                            scale=0.6, axis=0),
        ))
    end_box = Primitive(
        kind="box",
        pose=RigidTransform(rot_y(rng.uniform(-0.3, 0.3)), (rng.uniform(-0.6, 0.6), 0.4, 4.5)),
        size=(0.6, 0.6, 0.6),
        texture=_random_texture(rng),
    )
    return SceneSpec(seed=seed, primitives=(ground, *walls, end_box))


# ---------------------------------------------------------------------------
# dataset export / import (also the import format for user-supplied data)

def export_dataset(samples: list[ViewSample], out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    poses = []
    for i, sample in enumerate(samples):
        formats.write_png(out / f"{i:04d}.png", sample.image)
        formats.write_pfm(out / f"{i:04d}.pfm", sample.depth.values)
        poses.append(sample.pose)
    formats.write_poses(out / "poses.txt", poses)
    formats.write_intrinsics(out / "intrinsics.txt", samples[0].intrinsics)


def import_dataset(in_dir, d_min: float = DEFAULT_D_MIN,
                   d_max: float = DEFAULT_D_MAX) -> list[ViewSample]:
    src = Path(in_dir)
    k = formats.read_intrinsics(src / "intrinsics.txt")
    poses = formats.read_poses(src / "poses.txt")
    samples = []
    for i, pose in enumerate(poses):
        image = formats.read_png(src / f"{i:04d}.png")
        depth = np.clip(formats.read_pfm(src / f"{i:04d}.pfm"), d_min, d_max)
        samples.append(ViewSample(
            image=image.astype(np.float64),
            depth=DepthMap(depth.astype(np.float64), d_min=d_min, d_max=d_max),
            pose=pose,
            intrinsics=k,
        ))
    return samples
