import numpy as np
import pytest

from viewsynth import geometry as G
from viewsynth import metrics as M
from viewsynth import scenes as S


class TestL1:
    def test_equal_images(self):
        img = np.random.default_rng(0).random((8, 8, 3))
        assert M.l1_image(img, img) == 0.0

    def test_zeros_vs_ones(self):
        assert M.l1_image(np.zeros((4, 4)), np.ones((4, 4))) == 1.0

    def test_half_and_half(self):
        a = np.zeros((2, 4))
        b = np.concatenate([np.zeros((2, 2)), np.ones((2, 2))], axis=1)
        assert M.l1_image(a, b) == 0.5

    def test_shape_mismatch(self):
        with pytest.raises(M.MetricError):
            M.l1_image(np.zeros((2, 2)), np.zeros((3, 3)))


class TestSsim:
    def test_self_similarity_is_one(self):
        img = np.random.default_rng(1).random((16, 16, 3))
        assert abs(M.ssim(img, img) - 1.0) < 1e-9

    def test_constant_images_luminance_only(self):
        # hand evaluation with zero variances:
        # (2*0.2*0.8 + 1e-4) / (0.04 + 0.64 + 1e-4) = 0.47066...
        a = np.full((16, 16), 0.2)
        b = np.full((16, 16), 0.8)
        assert abs(M.ssim(a, b) - 0.4707) < 1e-3

    def test_negative_for_contrast_inversion(self):
        # 2-valued pattern around 0.5 vs its negative: means equal, covariance
        # = -variance, so the structure term flips sign
        rng = np.random.default_rng(2)
        pattern = np.where(rng.random((16, 16)) < 0.5, 0.25, 0.75)
        assert M.ssim(pattern, 1.0 - pattern) < 0.0

    def test_symmetry(self):
        rng = np.random.default_rng(3)
        a, b = rng.random((12, 12)), rng.random((12, 12))
        assert abs(M.ssim(a, b) - M.ssim(b, a)) < 1e-9

    def test_window_size_guard(self):
        with pytest.raises(M.MetricError):
            M.ssim(np.zeros((8, 8)), np.zeros((8, 8)))

    def test_in_range(self):
        rng = np.random.default_rng(4)
        for _ in range(5):
            a, b = rng.random((12, 12)), rng.random((12, 12))
            assert -1.0 <= M.ssim(a, b) <= 1.0


class TestAccThreshold:
    def test_exact_match(self):
        v = np.full((4, 4), 2.0)
        assert M.acc_threshold(v, v) == 1.0

    def test_ratio_boundaries(self):
        truth = np.array([2.0])
        assert M.acc_threshold(np.array([2.08]), truth, delta=1.05) == 1.0  # ratio 1.04
        assert M.acc_threshold(np.array([2.2]), truth, delta=1.05) == 0.0   # ratio 1.10

    def test_symmetric_ratio(self):
        # under-prediction counts through the max of both ratios
        assert M.acc_threshold(np.array([1.0]), np.array([1.2]), delta=1.05) == 0.0
        assert M.acc_threshold(np.array([1.0]), np.array([1.03]), delta=1.05) == 1.0

    def test_monotone_in_delta(self):
        rng = np.random.default_rng(5)
        pred = rng.uniform(0.5, 2.0, 100)
        truth = rng.uniform(0.5, 2.0, 100)
        accs = [M.acc_threshold(pred, truth, delta=d) for d in (1.01, 1.05, 1.2, 2.0)]
        assert all(a <= b + 1e-12 for a, b in zip(accs, accs[1:]))

    def test_requires_positive(self):
        with pytest.raises(M.MetricError):
            M.acc_threshold(np.array([-1.0]), np.array([1.0]))


class TestPoseAngles:
    def test_rotation_error_identity(self):
        assert M.rotation_error(np.eye(3), np.eye(3)) == 0.0

    def test_rotation_error_30_degrees(self):
        err = M.rotation_error(G.rot_z(np.deg2rad(30)), np.eye(3))
        assert abs(err - np.deg2rad(30)) < 1e-6

    def test_rotation_error_antipodal(self):
        rng = np.random.default_rng(6)
        r = G.random_rotation(rng)
        assert abs(M.rotation_error(r, r @ G.rot_x(np.pi)) - np.pi) < 1e-6

    def test_rotation_error_symmetric_and_triangle(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            a, b, c = (G.random_rotation(rng) for _ in range(3))
            assert abs(M.rotation_error(a, b) - M.rotation_error(b, a)) < 1e-9
            assert M.rotation_error(a, c) <= (
                M.rotation_error(a, b) + M.rotation_error(b, c) + 1e-6
            )

    def test_translation_error_cases(self):
        assert M.translation_error((2, 0, 0), (5, 0, 0)) == 0.0  # direction only
        assert abs(M.translation_error((1, 0, 0), (0, 1, 0)) - np.pi / 2) < 1e-9
        assert abs(M.translation_error((1, 2, 3), (-1, -2, -3)) - np.pi) < 1e-9

    def test_translation_error_zero_norm(self):
        with pytest.raises(M.MetricError):
            M.translation_error((0, 0, 0), (1, 0, 0))


class TestRigidFit:
    def test_recovers_known_transform(self):
        rng = np.random.default_rng(8)
        t_true = G.random_transform(rng)
        pts = rng.standard_normal((30, 3))
        fitted = M.fit_rigid(pts, t_true.apply(pts))
        assert fitted.is_close(t_true, atol=1e-9)

    def test_too_few_points(self):
        with pytest.raises(M.MetricError):
            M.fit_rigid(np.zeros((2, 3)), np.zeros((2, 3)))


class TestPoseErrorDirect:
    def _pair(self, az=14.0, el=10.0):
        k = S.default_intrinsics(32)
        spec = S.random_scene(21)
        pose_s = S.orbit_pose(0, 0)
        pose_t = S.orbit_pose(az, el)
        source = S.raycast(spec, pose_s, k)
        target = S.raycast(spec, pose_t, k)
        t_ts = G.relative_transform(pose_t, pose_s)
        flow = G.depth_to_flow(target.depth, k, t_ts)
        exact_depth = lambda xs, ys: S.raycast_at_pixels(spec, pose_s, k, xs, ys)[1]
        return source, target, flow, t_ts, exact_depth

    def test_oracle_flow_recovers_pose(self):
        source, target, flow, t_ts, exact_depth = self._pair()
        te, re = M.pose_error_direct(source, target, flow, t_ts,
                                     source_depth_lookup=exact_depth)
        assert te < 1e-4 and re < 1e-4

    def test_bilinear_depth_lookup_close(self):
        # default map-based source depth: interpolation-limited accuracy
        source, target, flow, t_ts, _ = self._pair()
        te, re = M.pose_error_direct(source, target, flow, t_ts)
        assert te < 0.02 and re < 0.02

    def test_noise_ordering(self):
        source, target, flow, t_ts, _ = self._pair()
        rng = np.random.default_rng(9)
        noisy = G.FlowField(flow.coords + rng.uniform(0, 1, flow.coords.shape),
                            flow.valid)
        te_n, re_n = M.pose_error_direct(source, target, noisy, t_ts)
        garbage = G.FlowField(
            rng.uniform(0, 31, flow.coords.shape).astype(np.float64), flow.valid
        )
        te_g, re_g = M.pose_error_direct(source, target, garbage, t_ts)
        assert 0.0 < re_n < re_g
        assert 0.0 < te_n < te_g

    def test_too_few_correspondences(self):
        source, target, flow, t_ts, _ = self._pair()
        with pytest.raises(M.MetricError):
            M.pose_error_direct(source, target, flow, t_ts,
                                mask=np.zeros_like(flow.valid))
