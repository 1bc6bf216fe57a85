"""Depth-guided appearance mapping: differentiable depth-to-flow projection
and bilinear warping, plus the full single-image synthesis composition."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import geometry
from .autodiff import ShapeError, Tensor, record
from .geometry import CameraIntrinsics, DepthMap, FlowField, RigidTransform, invert


@dataclass
class FlowTensor:
    """Differentiable counterpart of geometry.FlowField: coords stay on the
    tape, the validity mask is a plain array byproduct."""

    coords: Tensor       # (N, H, W, 2) or (H, W, 2)
    valid: np.ndarray    # matching bool mask


def _as_transform_list(t_ts, n: int) -> list[RigidTransform]:
    if isinstance(t_ts, RigidTransform):
        return [t_ts] * n
    t_ts = list(t_ts)
    if len(t_ts) != n:
        raise ShapeError(f"depth_to_flow_diff: {len(t_ts)} transforms for batch of {n}")
    return t_ts


def depth_to_flow_diff(d: Tensor, k: CameraIntrinsics, t_ts) -> FlowTensor:
    """Backward correspondences from a depth Tensor, differentiable w.r.t.
    depth. Forward values match geometry.depth_to_flow; the depth gradient is
    the closed form of the projection chain. Gradients are zeroed at invalid
    pixels (behind-camera or out-of-frame reprojections).

    d: (H, W) or (N, H, W); t_ts: target->source transform, one per batch item.
    """
    batched = d.data.ndim == 3
    if d.data.ndim not in (2, 3) or d.data.shape[-2:] != (k.height, k.width):
        raise ShapeError(
            f"depth_to_flow_diff: depth shape {d.data.shape} does not match "
            f"intrinsics {k.height}x{k.width}"
        )
    depth = d.data.astype(np.float64, copy=False).reshape(-1, k.height, k.width)
    transforms = _as_transform_list(t_ts, depth.shape[0])

    rays = geometry.camera_rays(k)
    coords = np.empty((depth.shape[0], k.height, k.width, 2), dtype=np.float64)
    dcoords = np.empty_like(coords)   # d(coords)/d(depth), zeroed where invalid
    valid = np.empty((depth.shape[0], k.height, k.width), dtype=bool)
    for i, t in enumerate(transforms):
        a = rays @ t.r.T                       # direction part, constant in depth
        q = depth[i][..., None] * a + t.t
        z = q[..., 2]
        front = z > 0
        zsafe = np.where(front, z, 1.0)
        xs = np.where(front, k.fx * q[..., 0] / zsafe + k.cx, geometry.BEHIND_CAMERA_COORD)
        ys = np.where(front, k.fy * q[..., 1] / zsafe + k.cy, geometry.BEHIND_CAMERA_COORD)
        ok = front & (xs >= 0) & (xs <= k.width - 1) & (ys >= 0) & (ys <= k.height - 1)
        coords[i, ..., 0] = xs
        coords[i, ..., 1] = ys
        valid[i] = ok
        z2 = zsafe * zsafe
        dcoords[i, ..., 0] = np.where(
            ok, k.fx * (a[..., 0] * t.t[2] - t.t[0] * a[..., 2]) / z2, 0.0
        )
        dcoords[i, ..., 1] = np.where(
            ok, k.fy * (a[..., 1] * t.t[2] - t.t[1] * a[..., 2]) / z2, 0.0
        )

    if not batched:
        coords = coords[0]
        valid = valid[0]
        dgrid = dcoords[0]
    else:
        dgrid = dcoords
    out = coords.astype(d.data.dtype, copy=False)

    def backward(g):
        gd = (g.astype(np.float64, copy=False) * dgrid).sum(axis=-1)
        return (gd.astype(d.data.dtype, copy=False),)

    return FlowTensor(record("depth_to_flow", [d], out, backward), valid)


def _normalize_sample_shapes(source: Tensor, flow: Tensor):
    """Map the accepted layouts onto the canonical batched NCHW + (N,H,W,2)."""
    s, f = source.data, flow.data
    if f.shape[-1] != 2:
        raise ShapeError(f"bilinear_sample: flow last dim must be 2, got {f.shape}")
    if s.ndim == 2 and f.ndim == 3:       # (H,W) + (H',W',2)
        return s[None, None], f[None], ("hw",)
    if s.ndim == 3 and f.ndim == 3:       # (H,W,C) + (H',W',2)
        return s.transpose(2, 0, 1)[None], f[None], ("hwc",)
    if s.ndim == 4 and f.ndim == 4:       # (N,C,H,W) + (N,H',W',2)
        if s.shape[0] != f.shape[0]:
            raise ShapeError(
                f"bilinear_sample: batch mismatch {s.shape[0]} vs {f.shape[0]}"
            )
        return s, f, ("nchw",)
    raise ShapeError(f"bilinear_sample: unsupported shapes {s.shape} and {f.shape}")


def bilinear_sample(source: Tensor, flow: Tensor) -> Tensor:
    """Sample source at continuous flow coordinates with tent-kernel weights;
    out-of-frame reads are zero. Gradients flow to both the source intensities
    and the flow coordinates (subgradient from the containing cell at integer
    crossings)."""
    s4, f4, layout = _normalize_sample_shapes(source, flow)
    n, c, hs, ws = s4.shape
    ht, wt = f4.shape[1], f4.shape[2]
    x = f4[..., 0]
    y = f4[..., 1]
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)

    nid = np.arange(n)[:, None, None, None]
    cid = np.arange(c)[None, :, None, None]
    corners = []
    out = np.zeros((n, c, ht, wt), dtype=s4.dtype)
    for dy in (0, 1):
        for dx in (0, 1):
            xi, yi = x0 + dx, y0 + dy
            w = np.maximum(0.0, 1.0 - np.abs(x - xi)) * np.maximum(0.0, 1.0 - np.abs(y - yi))
            inside = (xi >= 0) & (xi < ws) & (yi >= 0) & (yi < hs)
            w = np.where(inside, w, 0.0)
            xc = np.clip(xi, 0, ws - 1)[:, None]
            yc = np.clip(yi, 0, hs - 1)[:, None]
            val = s4[nid, cid, yc, xc]
            out = out + w[:, None] * val
            corners.append((xi, yi, xc, yc, w, inside, val))

    def backward(g):
        gs4 = np.zeros_like(s4)
        gx = np.zeros((n, ht, wt), dtype=f4.dtype)
        gy = np.zeros((n, ht, wt), dtype=f4.dtype)
        for (xi, yi, xc, yc, w, inside, val) in corners:
            np.add.at(
                gs4,
                (
                    np.broadcast_to(nid, g.shape),
                    np.broadcast_to(cid, g.shape),
                    np.broadcast_to(yc, g.shape),
                    np.broadcast_to(xc, g.shape),
                ),
                w[:, None] * g,
            )
            # tent derivative; at integer crossings take the containing
            # cell's subgradient (x == xi counts as the cell to its right)
            wx = np.maximum(0.0, 1.0 - np.abs(x - xi))
            wy = np.maximum(0.0, 1.0 - np.abs(y - yi))
            dwx = np.where(x >= xi, -1.0, 1.0)
            dwy = np.where(y >= yi, -1.0, 1.0)
            gv = (val * g).sum(axis=1)
            gx += np.where(inside, dwx * wy * gv, 0.0)
            gy += np.where(inside, dwy * wx * gv, 0.0)
        gf4 = np.stack([gx, gy], axis=-1)
        if layout[0] == "hw":
            return gs4[0, 0], gf4[0]
        if layout[0] == "hwc":
            return gs4[0].transpose(1, 2, 0), gf4[0]
        return gs4, gf4

    if layout[0] == "hw":
        out_data = out[0, 0]
    elif layout[0] == "hwc":
        out_data = out[0].transpose(1, 2, 0)
    else:
        out_data = out
    return record("bilinear_sample", [source, flow], out_data, backward)


# ---------------------------------------------------------------------------
# full composition

def synthesize_oracle(source_image: np.ndarray, target_depth: DepthMap,
                      t_st: RigidTransform, k: CameraIntrinsics):
    """Purely geometric warp using ground-truth target depth: project the
    target depth into the source view and pull pixels. Returns (image, flow)."""
    flow = geometry.depth_to_flow(target_depth, k, invert(t_st))
    warped = bilinear_sample(Tensor(np.asarray(source_image, dtype=np.float64)),
                             Tensor(flow.coords))
    return warped.data, flow


def synthesize_batch(model, sources: Tensor, view_changes, k: CameraIntrinsics):
    """Run the learned pipeline on a batch: encode, transform, decode, project,
    warp. sources are (N, C, H, W); view_changes one per sample. Returns a dict
    with the predicted images and the depth/flow intermediates (depth is None
    for the direct-flow variant)."""
    depth, flow = model.predict_geometry(sources, view_changes, k)
    pred = bilinear_sample(sources, flow.coords)
    return {"pred": pred, "depth": depth, "flow": flow}


def synthesize(source_image: np.ndarray, t_st: RigidTransform, k: CameraIntrinsics,
               model, d_azimuth_deg: float | None = None,
               d_elevation_deg: float | None = None):
    """Single-image inference convenience. Returns (image HxWxC, depth HxW or
    None, FlowField)."""
    from .tae import ViewChange

    src = np.asarray(source_image, dtype=np.float32)
    sources = Tensor(src.transpose(2, 0, 1)[None])
    vc = ViewChange(transform=t_st, d_azimuth_deg=d_azimuth_deg,
                    d_elevation_deg=d_elevation_deg)
    result = synthesize_batch(model, sources, [vc], k)
    image = result["pred"].data[0].transpose(1, 2, 0)
    depth = None if result["depth"] is None else result["depth"].data[0]
    flow = FlowField(result["flow"].coords.data[0].astype(np.float64),
                     result["flow"].valid[0])
    return image, depth, flow
