"""Evaluation metrics: per-pixel L1, windowed SSIM, ratio-threshold accuracy,
and angular pose errors with a correspondence-based pose fit."""

from __future__ import annotations

import numpy as np

from .geometry import (
    CameraIntrinsics,
    FlowField,
    RigidTransform,
    bilinear_lookup,
    camera_rays,
    relative_transform,
)

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = (0.01) ** 2   # L = 1 for [0,1] images
SSIM_C2 = (0.03) ** 2


class MetricError(ValueError):
    pass


def l1_image(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise MetricError(f"l1_image: shape mismatch {a.shape} vs {b.shape}")
    return float(np.abs(a - b).mean())


def _gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    half = (size - 1) / 2.0
    coords = np.arange(size, dtype=np.float64) - half
    g = np.exp(-(coords**2) / (2.0 * sigma**2))
    kernel = np.outer(g, g)
    return kernel / kernel.sum()


def _window_mean(x: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    size = kernel.shape[0]
    windows = np.lib.stride_tricks.sliding_window_view(x, (size, size))
    return np.tensordot(windows, kernel, axes=([2, 3], [0, 1]))


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean local SSIM over 11x11 Gaussian windows (sigma 1.5); multi-channel
    images are averaged over channels."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise MetricError(f"ssim: shape mismatch {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a = a[..., None]
        b = b[..., None]
    if a.shape[0] < SSIM_WINDOW or a.shape[1] < SSIM_WINDOW:
        raise MetricError(
            f"ssim: image {a.shape[0]}x{a.shape[1]} smaller than the "
            f"{SSIM_WINDOW}x{SSIM_WINDOW} window"
        )
    kernel = _gaussian_kernel(SSIM_WINDOW, SSIM_SIGMA)
    scores = []
    for c in range(a.shape[2]):
        x, y = a[..., c], b[..., c]
        mu_x = _window_mean(x, kernel)
        mu_y = _window_mean(y, kernel)
        var_x = _window_mean(x * x, kernel) - mu_x**2
        var_y = _window_mean(y * y, kernel) - mu_y**2
        cov = _window_mean(x * y, kernel) - mu_x * mu_y
        num = (2 * mu_x * mu_y + SSIM_C1) * (2 * cov + SSIM_C2)
        den = (mu_x**2 + mu_y**2 + SSIM_C1) * (var_x + var_y + SSIM_C2)
        scores.append((num / den).mean())
    return float(np.mean(scores))


def acc_threshold(pred: np.ndarray, truth: np.ndarray, delta: float = 1.05) -> float:
    """Fraction of entries whose prediction/truth ratio (either direction)
    stays below delta."""
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise MetricError(f"acc_threshold: shape mismatch {pred.shape} vs {truth.shape}")
    if pred.size == 0:
        raise MetricError("acc_threshold: empty input")
    if (pred <= 0).any() or (truth <= 0).any():
        raise MetricError("acc_threshold requires strictly positive values")
    ratio = np.maximum(pred / truth, truth / pred)
    return float((ratio < delta).mean())


def rotation_error(r_est: np.ndarray, r_true: np.ndarray) -> float:
    """Geodesic angle between two rotations, in radians."""
    r_est = np.asarray(r_est, dtype=np.float64)
    r_true = np.asarray(r_true, dtype=np.float64)
    for r in (r_est, r_true):
        if r.shape != (3, 3) or not np.allclose(r.T @ r, np.eye(3), atol=1e-5):
            raise MetricError("rotation_error expects 3x3 rotation matrices")
    arg = (np.trace(r_est @ r_true.T) - 1.0) / 2.0
    return float(np.arccos(np.clip(arg, -1.0, 1.0)))


def translation_error(t_est: np.ndarray, t_true: np.ndarray) -> float:
    """Angle between translation directions, in radians."""
    t_est = np.asarray(t_est, dtype=np.float64).reshape(3)
    t_true = np.asarray(t_true, dtype=np.float64).reshape(3)
    n_est = np.linalg.norm(t_est)
    n_true = np.linalg.norm(t_true)
    if n_est < 1e-12 or n_true < 1e-12:
        raise MetricError("translation_error undefined for zero-norm translations")
    arg = np.dot(t_est, t_true) / (n_est * n_true)
    return float(np.arccos(np.clip(arg, -1.0, 1.0)))


def fit_rigid(points_from: np.ndarray, points_to: np.ndarray) -> RigidTransform:
    """Least-squares rigid fit R p + t ~ q over paired 3D points (Kabsch)."""
    p = np.asarray(points_from, dtype=np.float64)
    q = np.asarray(points_to, dtype=np.float64)
    if p.shape != q.shape or p.ndim != 2 or p.shape[1] != 3 or p.shape[0] < 3:
        raise MetricError(f"fit_rigid needs matching Nx3 with N >= 3, got {p.shape}")
    cp = p.mean(axis=0)
    cq = q.mean(axis=0)
    h = (p - cp).T @ (q - cq)
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    r = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    return RigidTransform(r, cq - r @ cp)


def pose_error_direct(sample_s, sample_t, flow: FlowField,
                      requested: RigidTransform,
                      mask: np.ndarray | None = None,
                      source_depth_lookup=None) -> tuple[float, float]:
    """(TE, RE) between the requested target->source transform and the one
    realized by the given correspondences: unproject matched pixels in both
    views and fit a rigid motion.

    The correspondence set is restricted to flow-valid, mutually visible
    pixels (mask computed from the scene oracle when not supplied).
    source_depth_lookup(xs, ys) -> depths overrides the default bilinear read
    of the source depth map; pass an analytic raycast for exact closure."""
    from .scenes import visibility_mask

    k: CameraIntrinsics = sample_t.intrinsics
    if mask is None:
        mask = visibility_mask(sample_s, sample_t)
    # clamped far-plane depths are not world surfaces; only real geometry
    # constrains the pose
    surface = sample_t.depth.values < sample_t.depth.d_max - 1e-6
    use = mask & flow.valid & surface
    if use.sum() < 3:
        raise MetricError(f"pose_error_direct: only {int(use.sum())} valid correspondences")
    points_t = (camera_rays(k) * sample_t.depth.values[..., None])[use]
    xs = flow.coords[..., 0][use]
    ys = flow.coords[..., 1][use]
    if source_depth_lookup is None:
        z_s = bilinear_lookup(sample_s.depth.values, xs, ys)
    else:
        z_s = np.asarray(source_depth_lookup(xs, ys), dtype=np.float64)
    points_s = np.stack(
        [(xs - k.cx) / k.fx * z_s, (ys - k.cy) / k.fy * z_s, z_s], axis=-1
    )
    fitted = fit_rigid(points_t, points_s)
    # one trimmed refit: occlusion slivers that slip through the visibility
    # check show up as gross residual outliers
    residuals = np.linalg.norm(fitted.apply(points_t) - points_s, axis=-1)
    keep = residuals <= max(5.0 * np.median(residuals), 1e-9)
    if keep.sum() >= 3 and keep.sum() < keep.size:
        fitted = fit_rigid(points_t[keep], points_s[keep])
    te = translation_error(fitted.t, requested.t)
    re = rotation_error(fitted.r, requested.r)
    return te, re
