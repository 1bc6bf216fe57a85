"""Finite-difference verification of every differentiable operation and of
the composed pipeline; the CLI gradcheck subcommand and the acceptance suite
both run this."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from . import geometry, scenes, warp
from .autodiff import Tape, Tensor
from .tae import TaeConfig, TaeModel, ViewChange, transform_latent

GRADCHECK_LIMIT = 1e-3


def _signed_away_from_zero(rng, shape, low=0.1, high=1.0):
    # keeps samples off the L1 / leaky-relu kinks
    return (rng.uniform(low, high, shape) * np.where(rng.random(shape) < 0.5, -1.0, 1.0)).astype(
        np.float32
    )


def _off_grid_coords(rng, shape, extent):
    # fractional parts in [0.2, 0.8]: away from bilinear integer crossings
    return (rng.integers(0, extent - 1, shape) + rng.uniform(0.2, 0.8, shape)).astype(np.float32)


def gradcheck_ops(seed: int = 0) -> dict[str, float]:
    """Max relative finite-difference error per op, sampled away from
    non-smooth loci."""
    rng = np.random.default_rng(seed)
    results: dict[str, float] = {}

    x = Tensor(_signed_away_from_zero(rng, (3, 4)))
    other = Tensor(_signed_away_from_zero(rng, (3, 4)))
    target = Tensor(_signed_away_from_zero(rng, (3, 4)))
    results["add"] = ad.gradcheck(lambda t: ad.mean(ad.add(t, other)), x)
    results["mul"] = ad.gradcheck(lambda t: ad.mean(ad.mul(t, other)), x)
    results["l1_loss"] = ad.gradcheck(lambda t: ad.l1_loss(t, target), x)
    results["sigmoid"] = ad.gradcheck(lambda t: ad.mean(ad.sigmoid(t)), x)
    results["leaky_relu"] = ad.gradcheck(lambda t: ad.mean(ad.leaky_relu(t)), x)
    results["mean"] = ad.gradcheck(lambda t: ad.mean(t), x)
    results["reshape"] = ad.gradcheck(
        lambda t: ad.mean(ad.mul(ad.reshape(t, (4, 3)), Tensor(np.ones((4, 3), np.float32)))), x
    )
    results["transpose"] = ad.gradcheck(
        lambda t: ad.mean(ad.mul(ad.transpose(t, (1, 0)), other.data.T.copy())), x
    )
    wcat = Tensor(rng.standard_normal((6, 4)).astype(np.float32))
    results["concat"] = ad.gradcheck(
        lambda t: ad.mean(ad.mul(ad.concat([t, other], axis=0), wcat)), x
    )

    a = Tensor(rng.standard_normal((3, 5)).astype(np.float32))
    b = Tensor(rng.standard_normal((5, 2)).astype(np.float32))
    results["matmul_lhs"] = ad.gradcheck(lambda t: ad.mean(ad.matmul(t, b)), a)
    results["matmul_rhs"] = ad.gradcheck(lambda t: ad.mean(ad.matmul(a, t)), b)

    xc = Tensor(rng.standard_normal((2, 2, 6, 6)).astype(np.float32))
    wc = Tensor(rng.standard_normal((3, 2, 3, 3)).astype(np.float32))
    bc = Tensor(rng.standard_normal(3).astype(np.float32))
    results["conv2d_input"] = ad.gradcheck(
        lambda t: ad.mean(ad.conv2d(t, wc, bc, stride=2, padding=1)), xc
    )
    results["conv2d_weight"] = ad.gradcheck(
        lambda t: ad.mean(ad.conv2d(xc, t, bc, stride=1, padding=1)), wc
    )
    wt = Tensor(rng.standard_normal((2, 3, 4, 4)).astype(np.float32))
    results["transposed_conv2d_input"] = ad.gradcheck(
        lambda t: ad.mean(ad.transposed_conv2d(t, wt, stride=2, padding=1)), xc
    )
    results["transposed_conv2d_weight"] = ad.gradcheck(
        lambda t: ad.mean(ad.transposed_conv2d(xc, t, stride=2, padding=1)), wt
    )

    source = Tensor(rng.standard_normal((1, 2, 6, 6)).astype(np.float32))
    flow = Tensor(_off_grid_coords(rng, (1, 5, 5, 2), 6))
    wflow = Tensor(rng.standard_normal((1, 2, 5, 5)).astype(np.float32))
    results["bilinear_sample_source"] = ad.gradcheck(
        lambda t: ad.mean(ad.mul(warp.bilinear_sample(t, flow), wflow)), source
    )
    results["bilinear_sample_flow"] = ad.gradcheck(
        lambda t: ad.mean(ad.mul(warp.bilinear_sample(source, t), wflow)), flow
    )

    k = scenes.default_intrinsics(8)
    t_small = geometry.RigidTransform(
        geometry.rot_y(0.06) @ geometry.rot_x(0.03), (0.05, -0.02, 0.04)
    )
    depth = Tensor(rng.uniform(2.0, 4.0, (8, 8)))
    base = warp.depth_to_flow_diff(depth, k, t_small)
    c = base.coords.data
    stable = base.valid & (c[..., 0] > 0.5) & (c[..., 0] < 6.5) \
        & (c[..., 1] > 0.5) & (c[..., 1] < 6.5)
    weights = Tensor(rng.standard_normal((8, 8, 2)) * stable[..., None])
    results["depth_to_flow"] = ad.gradcheck(
        lambda t: ad.mean(ad.mul(warp.depth_to_flow_diff(t, k, t_small).coords, weights)), depth
    )

    rot = geometry.RigidTransform(geometry.rot_z(0.7), (0.1, 0.2, 0.3))
    wpts = Tensor(rng.standard_normal((5, 3)).astype(np.float32))
    results["transform_latent"] = ad.gradcheck(
        lambda t: ad.mean(ad.mul(transform_latent(t, rot), wpts)),
        Tensor(rng.standard_normal((5, 3)).astype(np.float32)),
    )
    return results


def gradcheck_end_to_end(seed: int = 0, n_params: int = 50, eps: float = 1e-3) -> float:
    """Finite differences on a random subset of decoder parameters through the
    whole loss (encode, transform, decode, project, warp, L1). Runs the model
    in float64 for the check."""
    rng = np.random.default_rng(seed)
    cfg = TaeConfig(image_size=16, latent_points=8, channels=(6, 12, 12))
    model = TaeModel(cfg, seed=seed)
    for tensor in model.store.params.values():
        tensor.data = tensor.data.astype(np.float64)

    k = scenes.default_intrinsics(16)
    spec = scenes.random_scene(7)
    pose_s = scenes.orbit_pose(0.0, 10.0)
    pose_t = scenes.orbit_pose(5.0, 10.0)
    source = scenes.raycast(spec, pose_s, k)
    target = scenes.raycast(spec, pose_t, k)
    t_st = geometry.relative_transform(pose_s, pose_t)
    src = Tensor(source.image.transpose(2, 0, 1)[None].astype(np.float64))
    tgt = Tensor(target.image.transpose(2, 0, 1)[None].astype(np.float64))
    views = [ViewChange(t_st, d_azimuth_deg=5.0, d_elevation_deg=0.0)]

    def loss_value() -> float:
        result = warp.synthesize_batch(model, src, views, k)
        return float(ad.l1_loss(result["pred"], tgt).data)

    model.store.clear_grads()
    with Tape() as tape:
        result = warp.synthesize_batch(model, src, views, k)
        loss = ad.l1_loss(result["pred"], tgt)
        tape.backward(loss, model.store)

    dec_names = [n for n in model.store.names() if n.startswith("dec.") and n.endswith(".w")]
    coords = []
    for name in dec_names:
        size = model.store[name].data.size
        for idx in rng.choice(size, size=min(size, 4 * n_params), replace=False):
            coords.append((name, int(idx)))
    picked = [coords[i] for i in rng.choice(len(coords), size=n_params, replace=False)]

    worst = 0.0
    for name, idx in picked:
        data = model.store[name].data.reshape(-1)
        analytic = float(model.store[name].grad.reshape(-1)[idx])
        orig = data[idx]
        data[idx] = orig + eps
        hi = loss_value()
        data[idx] = orig - eps
        lo = loss_value()
        data[idx] = orig
        numeric = (hi - lo) / (2.0 * eps)
        worst = max(worst, abs(analytic - numeric) / max(1.0, abs(numeric)))
    model.store.clear_grads()
    return worst


def run_all(seed: int = 0) -> dict[str, float]:
    results = gradcheck_ops(seed)
    results["end_to_end_loss"] = gradcheck_end_to_end(seed)
    return results
