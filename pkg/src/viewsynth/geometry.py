"""Pinhole camera model, rigid transforms, and depth-to-correspondence projection.

Conventions (pinned for the whole package):
  - camera frame: x right, y down, z forward; depth is the camera-z coordinate
  - pixel (x, y) indexes column x, row y; pixel centers at integer coordinates
  - scene poses are stored camera-to-world; the relative transform mapping
    target-camera coordinates into the source camera is
    world_to_cam(source) @ cam_to_world(target)

Everything here is plain float64 numpy and pure w.r.t. inputs; the
differentiable twin of ``depth_to_flow`` lives in ``viewsynth.warp``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ROTATION_TOL = 1e-6


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics: focal lengths and principal point in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise GeometryError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not (0 <= self.cx < self.width) or not (0 <= self.cy < self.height):
            raise GeometryError(
                f"principal point ({self.cx}, {self.cy}) outside {self.width}x{self.height} frame"
            )

    @property
    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]], dtype=np.float64
        )

    @property
    def matrix_inv(self) -> np.ndarray:
        return np.array(
            [
                [1.0 / self.fx, 0.0, -self.cx / self.fx],
                [0.0, 1.0 / self.fy, -self.cy / self.fy],
                [0.0, 0.0, 1.0],
            ],
            dtype=np.float64,
        )

    def scaled(self, s: float) -> "CameraIntrinsics":
        """Intrinsics with both focal lengths multiplied by s (principal point kept)."""
        return CameraIntrinsics(self.fx * s, self.fy * s, self.cx, self.cy, self.width, self.height)


def _check_rotation(r: np.ndarray) -> np.ndarray:
    r = np.asarray(r, dtype=np.float64)
    if r.shape != (3, 3):
        raise GeometryError(f"rotation must be 3x3, got {r.shape}")
    if not np.allclose(r.T @ r, np.eye(3), atol=ROTATION_TOL):
        raise GeometryError("matrix is not orthonormal within 1e-6")
    if abs(np.linalg.det(r) - 1.0) > ROTATION_TOL:
        raise GeometryError(f"det(R) = {np.linalg.det(r)}, not a proper rotation")
    return r


@dataclass(frozen=True)
class RigidTransform:
    """Rigid motion p -> r @ p + t."""

    r: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "r", _check_rotation(self.r))
        t = np.asarray(self.t, dtype=np.float64).reshape(3)
        object.__setattr__(self, "t", t)

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform(np.eye(3), np.zeros(3))

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform points of shape (..., 3)."""
        p = np.asarray(points, dtype=np.float64)
        return p @ self.r.T + self.t

    @property
    def matrix34(self) -> np.ndarray:
        """Row-major [R|t] as a 3x4 array (pose-file layout)."""
        return np.concatenate([self.r, self.t.reshape(3, 1)], axis=1)

    @staticmethod
    def from_matrix34(m: np.ndarray) -> "RigidTransform":
        m = np.asarray(m, dtype=np.float64).reshape(3, 4)
        return RigidTransform(m[:, :3], m[:, 3])

    def is_close(self, other: "RigidTransform", atol: float = 1e-6) -> bool:
        return np.allclose(self.r, other.r, atol=atol) and np.allclose(self.t, other.t, atol=atol)


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """Transform applying b first, then a."""
    return RigidTransform(a.r @ b.r, a.r @ b.t + a.t)


def invert(t: RigidTransform) -> RigidTransform:
    return RigidTransform(t.r.T, -t.r.T @ t.t)


def rot_x(angle_rad: float) -> np.ndarray:
    c, s = np.cos(angle_rad), np.sin(angle_rad)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]], dtype=np.float64)


def rot_y(angle_rad: float) -> np.ndarray:
    c, s = np.cos(angle_rad), np.sin(angle_rad)
    return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]], dtype=np.float64)


def rot_z(angle_rad: float) -> np.ndarray:
    c, s = np.cos(angle_rad), np.sin(angle_rad)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]], dtype=np.float64)


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform-ish random rotation via QR of a Gaussian matrix."""
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q *= np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def random_transform(rng: np.random.Generator, t_scale: float = 1.0) -> RigidTransform:
    return RigidTransform(random_rotation(rng), rng.uniform(-t_scale, t_scale, 3))


@dataclass(frozen=True)
class DepthMap:
    """Per-pixel positive depth along camera z."""

    values: np.ndarray
    d_min: float = 1e-6
    d_max: float = np.inf

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise GeometryError(f"depth map must be HxW, got shape {v.shape}")
        if not np.isfinite(self.d_min) or self.d_min <= 0 or self.d_min >= self.d_max:
            raise GeometryError(f"need 0 < d_min < d_max, got ({self.d_min}, {self.d_max})")
        if v.min() < self.d_min or (np.isfinite(self.d_max) and v.max() > self.d_max):
            raise GeometryError(
                f"depth values [{v.min()}, {v.max()}] outside configured range "
                f"[{self.d_min}, {self.d_max}]"
            )
        object.__setattr__(self, "values", v)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass
class FlowField:
    """Backward correspondences: coords[y, x] is the continuous source pixel
    sampled for target pixel (x, y); valid is false where the reprojected
    point is behind the source camera or lands outside the source frame."""

    coords: np.ndarray  # H x W x 2, (x_s, y_s)
    valid: np.ndarray   # H x W bool

    @property
    def height(self) -> int:
        return self.coords.shape[0]

    @property
    def width(self) -> int:
        return self.coords.shape[1]


# Pixels that reproject behind the camera get this sentinel coordinate:
# out of every frame, so bilinear sampling weights vanish there.
BEHIND_CAMERA_COORD = -1.0


def unproject(k: CameraIntrinsics, pixel, depth: float) -> np.ndarray:
    """Lift pixel (x, y) at the given depth to camera-frame 3D coordinates."""
    if depth <= 0:
        raise GeometryError(f"depth must be positive, got {depth}")
    x, y = pixel
    return np.array(
        [(x - k.cx) / k.fx * depth, (y - k.cy) / k.fy * depth, depth], dtype=np.float64
    )


def project(k: CameraIntrinsics, point) -> tuple[float, float, float]:
    """Perspective-project a camera-frame point; returns (x, y, z_cam).

    z_cam is always returned so callers can mask non-positive depths; the
    (x, y) result is only meaningful when z_cam > 0.
    """
    p = np.asarray(point, dtype=np.float64).reshape(3)
    z = p[2]
    if z <= 0:
        return BEHIND_CAMERA_COORD, BEHIND_CAMERA_COORD, float(z)
    return float(k.fx * p[0] / z + k.cx), float(k.fy * p[1] / z + k.cy), float(z)


def pixel_grid(k: CameraIntrinsics) -> tuple[np.ndarray, np.ndarray]:
    """Meshgrid of pixel x and y coordinates, each H x W."""
    xs = np.arange(k.width, dtype=np.float64)
    ys = np.arange(k.height, dtype=np.float64)
    return np.meshgrid(xs, ys)


def camera_rays(k: CameraIntrinsics) -> np.ndarray:
    """H x W x 3 ray directions K^-1 (x, y, 1); z component is 1 so the ray
    parameter equals camera depth."""
    gx, gy = pixel_grid(k)
    return np.stack(
        [(gx - k.cx) / k.fx, (gy - k.cy) / k.fy, np.ones_like(gx)], axis=-1
    )


def depth_to_flow(d: DepthMap, k: CameraIntrinsics, t_ts: RigidTransform) -> FlowField:
    """Backward correspondences from target-view depth.

    Per pixel: lift (x_t, y_t, depth) to 3D, move into the source camera with
    t_ts (target->source), perspective-project. Matches project(k, t_ts.apply(
    unproject(k, pixel, depth))) at every pixel.
    """
    if d.values.shape != (k.height, k.width):
        raise GeometryError(
            f"depth shape {d.values.shape} does not match intrinsics "
            f"{k.height}x{k.width}"
        )
    # identity collapses exactly; skip the projection roundoff
    if not t_ts.t.any() and np.array_equal(t_ts.r, np.eye(3)):
        return identity_flow(k)
    rays = camera_rays(k)
    points = rays * d.values[..., None]          # target-camera 3D
    q = points @ t_ts.r.T + t_ts.t               # source-camera 3D
    z = q[..., 2]
    front = z > 0
    zsafe = np.where(front, z, 1.0)
    xs = k.fx * q[..., 0] / zsafe + k.cx
    ys = k.fy * q[..., 1] / zsafe + k.cy
    xs = np.where(front, xs, BEHIND_CAMERA_COORD)
    ys = np.where(front, ys, BEHIND_CAMERA_COORD)
    in_frame = (xs >= 0) & (xs <= k.width - 1) & (ys >= 0) & (ys <= k.height - 1)
    return FlowField(np.stack([xs, ys], axis=-1), front & in_frame)


def identity_flow(k: CameraIntrinsics) -> FlowField:
    gx, gy = pixel_grid(k)
    return FlowField(np.stack([gx, gy], axis=-1), np.ones((k.height, k.width), dtype=bool))


def bilinear_lookup(values: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Bilinearly interpolate an HxW (or HxWxC) grid at continuous pixel
    coordinates; out-of-frame samples read as 0."""
    h, w = values.shape[:2]
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    out = None
    for dy in (0, 1):
        for dx in (0, 1):
            xi, yi = x0 + dx, y0 + dy
            wgt = np.maximum(0.0, 1.0 - np.abs(xs - xi)) * np.maximum(0.0, 1.0 - np.abs(ys - yi))
            inside = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
            vals = values[np.clip(yi, 0, h - 1), np.clip(xi, 0, w - 1)]
            if values.ndim == 3:
                wgt = wgt[..., None]
                inside = inside[..., None]
            term = np.where(inside, wgt * vals, 0.0)
            out = term if out is None else out + term
    return out


def look_at(camera_pos, target, down=(0.0, 1.0, 0.0)) -> RigidTransform:
    """Camera-to-world pose of a camera at camera_pos looking at target.

    down is the world direction the camera's +y should roughly follow
    (y points down in the camera frame).
    """
    camera_pos = np.asarray(camera_pos, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - camera_pos
    norm = np.linalg.norm(forward)
    if norm < 1e-12:
        raise GeometryError("camera position coincides with look-at target")
    forward = forward / norm
    d = np.asarray(down, dtype=np.float64)
    y_axis = d - np.dot(d, forward) * forward
    ynorm = np.linalg.norm(y_axis)
    if ynorm < 1e-9:
        raise GeometryError("view direction parallel to the down axis")
    y_axis = y_axis / ynorm
    x_axis = np.cross(y_axis, forward)
    r_c2w = np.stack([x_axis, y_axis, forward], axis=1)
    return RigidTransform(r_c2w, camera_pos)


def relative_transform(pose_from: RigidTransform, pose_to: RigidTransform) -> RigidTransform:
    """Map coordinates in the pose_from camera into the pose_to camera.

    Both poses are camera-to-world; result = world_to_cam(to) @ cam_to_world(from).
    """
    return compose(invert(pose_to), pose_from)
