import numpy as np
import pytest

from viewsynth import autodiff as ad
from viewsynth import geometry as G
from viewsynth import scenes as S
from viewsynth import warp as W
from viewsynth.autodiff import Tape, Tensor
from viewsynth.tae import TaeConfig, TaeModel


class TestBilinearSample:
    def test_four_neighbor_mean(self):
        src = Tensor(np.array([[0.0, 1.0], [2.0, 3.0]], np.float32))
        flow = Tensor(np.array([[[0.5, 0.5]]], np.float32))
        assert float(W.bilinear_sample(src, flow).data[0, 0]) == 1.5

    def test_integer_identity_flow_exact(self):
        rng = np.random.default_rng(0)
        img = rng.random((9, 7, 3)).astype(np.float32)
        gx, gy = np.meshgrid(np.arange(7, dtype=np.float32), np.arange(9, dtype=np.float32))
        flow = Tensor(np.stack([gx, gy], axis=-1))
        out = W.bilinear_sample(Tensor(img), flow)
        assert np.array_equal(out.data, img)

    def test_out_of_frame_zero(self):
        src = Tensor(np.ones((4, 4), np.float32))
        flow = Tensor(np.array([[[-5.0, -5.0], [10.0, 1.0]]], np.float32))
        assert np.array_equal(W.bilinear_sample(src, flow).data, [[0.0, 0.0]])

    def test_linearity_in_source(self):
        rng = np.random.default_rng(1)
        img = rng.random((6, 6, 3))
        flow = Tensor(rng.uniform(0, 5, (4, 4, 2)))
        out1 = W.bilinear_sample(Tensor(img), flow).data
        out2 = W.bilinear_sample(Tensor(img * 3.5), flow).data
        assert np.allclose(out2, out1 * 3.5, atol=1e-12)

    def test_batched_matches_unbatched(self):
        rng = np.random.default_rng(2)
        img = rng.random((5, 5, 3)).astype(np.float32)
        flow = rng.uniform(0, 4, (3, 3, 2)).astype(np.float32)
        un = W.bilinear_sample(Tensor(img), Tensor(flow)).data
        ba = W.bilinear_sample(
            Tensor(img.transpose(2, 0, 1)[None]), Tensor(flow[None])
        ).data[0].transpose(1, 2, 0)
        assert np.allclose(un, ba, atol=1e-7)

    def test_shape_mismatch(self):
        with pytest.raises(ad.ShapeError):
            W.bilinear_sample(Tensor(np.ones((2, 2, 3, 4, 5))), Tensor(np.ones((2, 2, 2))))
        with pytest.raises(ad.ShapeError):
            W.bilinear_sample(Tensor(np.ones((1, 3, 4, 4))), Tensor(np.ones((2, 4, 4, 2))))

    def test_gradients_both_inputs(self):
        rng = np.random.default_rng(3)
        src = Tensor(rng.standard_normal((1, 2, 5, 5)).astype(np.float32))
        flow = Tensor((rng.integers(0, 4, (1, 3, 3, 2)) + rng.uniform(0.2, 0.8, (1, 3, 3, 2))).astype(np.float32))
        wts = Tensor(rng.standard_normal((1, 2, 3, 3)).astype(np.float32))
        assert ad.gradcheck(lambda t: ad.mean(ad.mul(W.bilinear_sample(t, flow), wts)), src) < 1e-3
        assert ad.gradcheck(lambda t: ad.mean(ad.mul(W.bilinear_sample(src, t), wts)), flow) < 1e-3


class TestDepthToFlowDiff:
    def test_identity_transform_zero_depth_gradient(self):
        k = S.default_intrinsics(8)
        depth = Tensor(np.full((8, 8), 2.0, np.float32), requires_grad=True)
        with Tape() as tape:
            ft = W.depth_to_flow_diff(depth, k, G.RigidTransform.identity())
            loss = ad.mean(ft.coords)
            tape.backward(loss)
        gx, gy = G.pixel_grid(k)
        assert np.abs(ft.coords.data - np.stack([gx, gy], -1)).max() < 1e-5
        assert np.allclose(depth.grad, 0.0)
        assert ft.valid.all()

    def test_matches_geometry_twin_100_random(self):
        k = S.default_intrinsics(16)
        rng = np.random.default_rng(4)
        worst_valid = 0.0
        for _ in range(100):
            t = G.random_transform(rng, 0.4)
            dvals = rng.uniform(1.0, 5.0, (16, 16))
            geo = G.depth_to_flow(G.DepthMap(dvals, 0.1, 10.0), k, t)
            diff = W.depth_to_flow_diff(Tensor(dvals), k, t)
            assert (geo.valid == diff.valid).all()
            dev = np.abs(geo.coords - diff.coords.data)
            if geo.valid.any():
                worst_valid = max(worst_valid, dev[geo.valid].max())
            # invalid pixels still agree relative to their (unbounded) size
            rel = dev / np.maximum(1.0, np.abs(geo.coords))
            assert rel.max() < 1e-9
        assert worst_valid < 1e-6

    def test_gradcheck_against_central_differences(self):
        k = S.default_intrinsics(8)
        rng = np.random.default_rng(5)
        t = G.RigidTransform(G.rot_y(0.08) @ G.rot_x(0.04), (0.05, -0.03, 0.02))
        depth = Tensor(rng.uniform(2.0, 4.0, (8, 8)))
        base = W.depth_to_flow_diff(depth, k, t)
        c = base.coords.data
        margin = base.valid & (c[..., 0] > 0.5) & (c[..., 0] < 6.5) \
            & (c[..., 1] > 0.5) & (c[..., 1] < 6.5)
        wts = Tensor(rng.standard_normal((8, 8, 2)) * margin[..., None])
        err = ad.gradcheck(
            lambda d: ad.mean(ad.mul(W.depth_to_flow_diff(d, k, t).coords, wts)), depth
        )
        assert err < 1e-3

    def test_batched_per_sample_transforms(self):
        k = S.default_intrinsics(8)
        rng = np.random.default_rng(6)
        d = rng.uniform(1.0, 5.0, (3, 8, 8))
        ts = [G.random_transform(rng, 0.3) for _ in range(3)]
        batched = W.depth_to_flow_diff(Tensor(d), k, ts)
        for i in range(3):
            single = W.depth_to_flow_diff(Tensor(d[i]), k, ts[i])
            assert np.allclose(batched.coords.data[i], single.coords.data, atol=1e-6)

    def test_dimension_mismatch(self):
        with pytest.raises(ad.ShapeError):
            W.depth_to_flow_diff(Tensor(np.ones((4, 4))), S.default_intrinsics(8),
                                 G.RigidTransform.identity())


class TestSynthesizeOracle:
    def test_identity_is_bitwise_identity(self):
        k = S.default_intrinsics(32)
        view = S.raycast(S.random_scene(0), S.orbit_pose(0, 0), k)
        out, flow = W.synthesize_oracle(view.image, view.depth,
                                        G.RigidTransform.identity(), k)
        assert np.array_equal(out, view.image)
        assert flow.valid.all()

    def test_translation_over_textured_plane(self):
        # fronto-parallel plane, pure x-translation: warp matches raycast
        plane = S.Primitive(
            kind="plane", pose=G.RigidTransform(np.eye(3), (0, 0, 2.0)),
            size=(20.0, 20.0),
            texture=S.Texture("gradient", (0.9, 0.1, 0.1), (0.1, 0.1, 0.9), scale=3.0),
        )
        spec = S.SceneSpec(seed=0, primitives=(plane,))
        k = S.default_intrinsics(32)
        pose_s = G.RigidTransform(np.eye(3), (0.0, 0.0, 0.0))
        pose_t = G.RigidTransform(np.eye(3), (0.3, 0.0, 0.0))
        source = S.raycast(spec, pose_s, k)
        target = S.raycast(spec, pose_t, k)
        t_st = G.relative_transform(pose_s, pose_t)
        out, flow = W.synthesize_oracle(source.image, target.depth, t_st, k)
        assert np.abs(out - target.image)[flow.valid].mean() < 1e-3

    def test_five_degree_orbit_of_textured_sphere(self):
        k = S.default_intrinsics(64)
        spec = S.random_scene(11)
        pose_s = S.orbit_pose(0, 10)
        pose_t = S.orbit_pose(5, 10)
        source = S.raycast(spec, pose_s, k)
        target = S.raycast(spec, pose_t, k)
        out, _ = W.synthesize_oracle(
            source.image, target.depth, G.relative_transform(pose_s, pose_t), k
        )
        vis = S.visibility_mask(source, target)
        assert np.abs(out - target.image)[vis].mean() < 0.02

    def test_appearance_scaling_equivariance(self):
        k = S.default_intrinsics(32)
        spec = S.random_scene(12)
        pose_s = S.orbit_pose(0, 0)
        pose_t = S.orbit_pose(10, 0)
        source = S.raycast(spec, pose_s, k)
        target = S.raycast(spec, pose_t, k)
        t_st = G.relative_transform(pose_s, pose_t)
        out1, _ = W.synthesize_oracle(source.image, target.depth, t_st, k)
        out2, _ = W.synthesize_oracle(source.image * 0.25, target.depth, t_st, k)
        assert np.allclose(out2, out1 * 0.25, atol=1e-12)


class TestSynthesizeLearned:
    def test_untrained_smoke(self):
        cfg = TaeConfig(image_size=32, latent_points=16, channels=(8, 16, 32, 32))
        model = TaeModel(cfg, seed=0)
        k = S.default_intrinsics(32)
        view = S.raycast(S.random_scene(1), S.orbit_pose(0, 0), k)
        t_st = G.relative_transform(S.orbit_pose(0, 0), S.orbit_pose(15, 0))
        image, depth, flow = W.synthesize(view.image, t_st, k, model)
        assert image.shape == (32, 32, 3)
        assert depth.shape == (32, 32)
        assert flow.coords.shape == (32, 32, 2)
        assert np.isfinite(image).all() and np.isfinite(depth).all()
        assert (depth > cfg.d_min).all() and (depth < cfg.d_max).all()

    def test_composition_matches_stagewise_call(self):
        cfg = TaeConfig(image_size=32, latent_points=16, channels=(8, 16, 32, 32))
        model = TaeModel(cfg, seed=1)
        k = S.default_intrinsics(32)
        view = S.raycast(S.random_scene(2), S.orbit_pose(0, 0), k)
        t_st = G.relative_transform(S.orbit_pose(0, 0), S.orbit_pose(20, 10))
        image, depth, flow = W.synthesize(view.image, t_st, k, model)

        from viewsynth.tae import transform_latent
        z = model.encode(view.image)
        zt = transform_latent(z, t_st)
        d2 = model.decode_depth(zt)
        f2 = W.depth_to_flow_diff(d2, k, G.invert(t_st))
        out2 = W.bilinear_sample(Tensor(view.image.astype(np.float32)), f2.coords)
        assert np.allclose(depth, d2.data, atol=1e-6)
        assert np.allclose(image, out2.data, atol=1e-5)
