import numpy as np
import pytest

from viewsynth import geometry as G


def k128():
    return G.CameraIntrinsics(fx=100, fy=100, cx=64, cy=64, width=128, height=128)


class TestIntrinsics:
    def test_invariants(self):
        with pytest.raises(G.GeometryError):
            G.CameraIntrinsics(fx=-1, fy=1, cx=0, cy=0, width=4, height=4)
        with pytest.raises(G.GeometryError):
            G.CameraIntrinsics(fx=1, fy=1, cx=9, cy=0, width=4, height=4)

    def test_matrix_inverse(self):
        k = k128()
        assert np.allclose(k.matrix @ k.matrix_inv, np.eye(3), atol=1e-12)


class TestRigidTransform:
    def test_rejects_non_rotation(self):
        with pytest.raises(G.GeometryError):
            G.RigidTransform(np.eye(3) * 2.0, np.zeros(3))
        with pytest.raises(G.GeometryError):
            G.RigidTransform(-np.eye(3), np.zeros(3))  # det -1

    def test_compose_identity(self):
        i = G.RigidTransform.identity()
        assert G.compose(i, i).is_close(i)

    def test_compose_with_inverse_is_identity(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            t = G.random_transform(rng)
            assert G.compose(t, G.invert(t)).is_close(G.RigidTransform.identity())

    def test_planar_rotation_additivity(self):
        a = G.RigidTransform(G.rot_z(np.deg2rad(30)), np.zeros(3))
        b = G.RigidTransform(G.rot_z(np.deg2rad(60)), np.zeros(3))
        expected = G.RigidTransform(G.rot_z(np.deg2rad(90)), np.zeros(3))
        assert G.compose(a, b).is_close(expected)

    def test_invert_identity_and_translation(self):
        assert G.invert(G.RigidTransform.identity()).is_close(G.RigidTransform.identity())
        t = G.RigidTransform(np.eye(3), (1, 2, 3))
        assert G.invert(t).is_close(G.RigidTransform(np.eye(3), (-1, -2, -3)))

    def test_invert_involution(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            t = G.random_transform(rng)
            assert G.invert(G.invert(t)).is_close(t)

    def test_compose_associative(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            a, b, c = (G.random_transform(rng) for _ in range(3))
            left = G.compose(G.compose(a, b), c)
            right = G.compose(a, G.compose(b, c))
            assert left.is_close(right, atol=1e-6)

    def test_apply_then_compose_matches(self):
        rng = np.random.default_rng(3)
        a, b = G.random_transform(rng), G.random_transform(rng)
        p = rng.standard_normal((10, 3))
        assert np.allclose(G.compose(a, b).apply(p), a.apply(b.apply(p)), atol=1e-12)


class TestProjection:
    def test_unproject_principal_ray(self):
        assert np.allclose(G.unproject(k128(), (64, 64), 2.0), (0, 0, 2))

    def test_unproject_offsets(self):
        # hand-evaluated K^-1 [x, y, 1] * depth
        assert np.allclose(G.unproject(k128(), (84, 64), 2.0), (0.4, 0, 2))
        assert np.allclose(G.unproject(k128(), (64, 84), 1.0), (0, 0.2, 1))

    def test_unproject_rejects_nonpositive_depth(self):
        with pytest.raises(G.GeometryError):
            G.unproject(k128(), (0, 0), 0.0)

    def test_project_on_axis(self):
        assert np.allclose(G.project(k128(), (0, 0, 2)), (64, 64, 2))

    def test_project_offset(self):
        # 100 * 0.5 / 2 + 64 = 89
        assert np.allclose(G.project(k128(), (0.5, 0, 2)), (89, 64, 2))

    def test_project_behind_camera_flagged(self):
        x, y, z = G.project(k128(), (0, 0, -1))
        assert z == -1.0

    def test_round_trip_1000_random(self):
        k = k128()
        rng = np.random.default_rng(4)
        for _ in range(1000):
            px = rng.uniform(0, k.width - 1)
            py = rng.uniform(0, k.height - 1)
            d = rng.uniform(0.1, 50.0)
            x, y, z = G.project(k, G.unproject(k, (px, py), d))
            assert abs(x - px) < 1e-6 and abs(y - py) < 1e-6
            assert abs(z - d) < 1e-9


class TestDepthToFlow:
    def test_identity_transform_is_identity_flow(self):
        k = k128()
        d = G.DepthMap(np.full((128, 128), 2.0), 0.1, 10.0)
        flow = G.depth_to_flow(d, k, G.RigidTransform.identity())
        gx, gy = G.pixel_grid(k)
        assert np.abs(flow.coords[..., 0] - gx).max() < 1e-6
        assert np.abs(flow.coords[..., 1] - gy).max() < 1e-6
        assert flow.valid.all()

    def test_uniform_disparity_from_x_translation(self):
        # fx * tx / Z = 100 * 0.5 / 2 = 25 px everywhere
        k = k128()
        d = G.DepthMap(np.full((128, 128), 2.0), 0.1, 10.0)
        flow = G.depth_to_flow(d, k, G.RigidTransform(np.eye(3), (0.5, 0, 0)))
        gx, gy = G.pixel_grid(k)
        assert np.abs(flow.coords[..., 0] - (gx + 25.0)).max() < 1e-9
        assert np.abs(flow.coords[..., 1] - gy).max() < 1e-9

    def test_forward_translation_hand_case(self):
        # pixel (84,64) at depth 2 -> (0.4,0,2); shifted to (0.4,0,1.5);
        # projects to 100*0.4/1.5 + 64 = 90.666...
        k = k128()
        d = G.DepthMap(np.full((128, 128), 2.0), 0.1, 10.0)
        flow = G.depth_to_flow(d, k, G.RigidTransform(np.eye(3), (0, 0, -0.5)))
        assert np.allclose(flow.coords[64, 84], (90.0 + 2.0 / 3.0, 64.0), atol=1e-9)

    def test_matches_pointwise_composition(self):
        k = G.CameraIntrinsics(fx=40, fy=44, cx=15.5, cy=16.5, width=32, height=32)
        rng = np.random.default_rng(5)
        d = G.DepthMap(rng.uniform(1.0, 5.0, (32, 32)), 0.1, 10.0)
        t = G.random_transform(rng, 0.5)
        flow = G.depth_to_flow(d, k, t)
        for _ in range(50):
            px, py = rng.integers(0, 32), rng.integers(0, 32)
            x, y, z = G.project(k, t.apply(G.unproject(k, (px, py), d.values[py, px])))
            if z > 0:
                assert np.allclose(flow.coords[py, px], (x, y), atol=1e-9)

    def test_behind_camera_masked_invalid(self):
        k = k128()
        d = G.DepthMap(np.full((128, 128), 2.0), 0.1, 10.0)
        # push everything behind the source camera
        flow = G.depth_to_flow(d, k, G.RigidTransform(np.eye(3), (0, 0, -5.0)))
        assert not flow.valid.any()

    def test_dimension_mismatch(self):
        d = G.DepthMap(np.full((16, 16), 2.0), 0.1, 10.0)
        with pytest.raises(G.GeometryError):
            G.depth_to_flow(d, k128(), G.RigidTransform.identity())

    def test_pure_rotation_flow_depth_independent(self):
        # rotation flow never touches depth: any positive rescaling of the
        # depth map leaves it unchanged
        k = G.CameraIntrinsics(fx=32, fy=32, cx=15.5, cy=15.5, width=32, height=32)
        rng = np.random.default_rng(6)
        rot = G.RigidTransform(G.rot_y(0.1) @ G.rot_x(-0.07), np.zeros(3))
        base_depth = rng.uniform(1.0, 4.0, (32, 32))
        flow_a = G.depth_to_flow(G.DepthMap(base_depth, 0.01, 100), k, rot)
        flow_b = G.depth_to_flow(G.DepthMap(base_depth * 3.7, 0.01, 100), k, rot)
        both = flow_a.valid & flow_b.valid
        assert both.any()
        assert np.abs(flow_a.coords - flow_b.coords)[both].max() < 1e-6

    def test_intrinsics_scale_property_roll_rotation(self):
        # scaling fx, fy by s (and depths by any constant) leaves the flow of
        # an optical-axis rotation unchanged: K Rz K^-1 commutes with the
        # focal scaling (for pan/tilt rotations the flow genuinely depends on
        # the focal scale, so the invariance is tested where it is exact)
        k = G.CameraIntrinsics(fx=32, fy=32, cx=15.5, cy=15.5, width=32, height=32)
        rng = np.random.default_rng(6)
        rot = G.RigidTransform(G.rot_z(0.21), np.zeros(3))
        base_depth = rng.uniform(1.0, 4.0, (32, 32))
        flow_a = G.depth_to_flow(G.DepthMap(base_depth, 0.01, 100), k, rot)
        flow_b = G.depth_to_flow(
            G.DepthMap(base_depth * 3.7, 0.01, 100), k.scaled(2.5), rot
        )
        both = flow_a.valid & flow_b.valid
        assert both.any()
        assert np.abs(flow_a.coords - flow_b.coords)[both].max() < 1e-6


class TestDepthMap:
    def test_range_invariant(self):
        with pytest.raises(G.GeometryError):
            G.DepthMap(np.full((4, 4), 0.05), d_min=0.1, d_max=1.0)
        with pytest.raises(G.GeometryError):
            G.DepthMap(np.full((4, 4), 2.0), d_min=0.1, d_max=1.0)


class TestLookAt:
    def test_axes_orthonormal(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            pos = rng.uniform(-3, 3, 3)
            target = rng.uniform(-1, 1, 3)
            if np.linalg.norm(pos - target) < 0.5:
                continue
            t = G.look_at(pos, target)  # constructor validates rotation
            forward = t.r[:, 2]
            assert np.allclose(forward, (target - pos) / np.linalg.norm(target - pos))

    def test_relative_transform_direction(self):
        rng = np.random.default_rng(8)
        a, b = G.random_transform(rng), G.random_transform(rng)
        p_world = rng.standard_normal(3)
        p_a = G.invert(a).apply(p_world)
        p_b = G.invert(b).apply(p_world)
        assert np.allclose(G.relative_transform(a, b).apply(p_a), p_b, atol=1e-9)


class TestBilinearLookup:
    def test_integer_coordinates_exact(self):
        rng = np.random.default_rng(9)
        grid = rng.random((6, 8))
        xs = np.array([0.0, 3.0, 7.0])
        ys = np.array([0.0, 2.0, 5.0])
        assert np.allclose(G.bilinear_lookup(grid, xs, ys), grid[[0, 2, 5], [0, 3, 7]])

    def test_midpoint_average(self):
        grid = np.array([[0.0, 1.0], [2.0, 3.0]])
        assert np.isclose(G.bilinear_lookup(grid, np.array([0.5]), np.array([0.5]))[0], 1.5)

    def test_out_of_frame_zero(self):
        grid = np.ones((4, 4))
        assert G.bilinear_lookup(grid, np.array([-5.0]), np.array([-5.0]))[0] == 0.0
