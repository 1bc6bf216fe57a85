import numpy as np
import pytest

from viewsynth import formats
from viewsynth.geometry import CameraIntrinsics, RigidTransform, random_transform


def test_pfm_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    values = rng.uniform(0.5, 6.0, (17, 23)).astype(np.float32)
    path = tmp_path / "d.pfm"
    formats.write_pfm(path, values)
    assert np.array_equal(formats.read_pfm(path), values)


def test_pfm_header(tmp_path):
    path = tmp_path / "d.pfm"
    formats.write_pfm(path, np.ones((4, 6), dtype=np.float32))
    raw = path.read_bytes()
    assert raw.startswith(b"Pf\n6 4\n-1.0\n")
    assert len(raw) == len(b"Pf\n6 4\n-1.0\n") + 4 * 6 * 4


def test_pfm_rejects_color_header(tmp_path):
    path = tmp_path / "bad.pfm"
    path.write_bytes(b"PF\n2 2\n-1.0\n" + b"\x00" * 48)
    with pytest.raises(formats.FormatError):
        formats.read_pfm(path)


def test_pose_file_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    poses = [random_transform(rng) for _ in range(5)]
    path = tmp_path / "poses.txt"
    formats.write_poses(path, poses)
    loaded = formats.read_poses(path)
    assert len(loaded) == 5
    for a, b in zip(poses, loaded):
        assert np.array_equal(a.matrix34, b.matrix34)  # %.17g is exact for f64


def test_pose_line_layout():
    t = RigidTransform(np.eye(3), (1.0, 2.0, 3.0))
    parts = formats.format_pose_line(t).split()
    assert len(parts) == 12
    assert [float(p) for p in parts] == [1, 0, 0, 1, 0, 1, 0, 2, 0, 0, 1, 3]


def test_pose_line_wrong_count():
    with pytest.raises(formats.FormatError):
        formats.parse_pose_line("1 2 3")


def test_intrinsics_round_trip(tmp_path):
    k = CameraIntrinsics(fx=33.5, fy=31.25, cx=15.5, cy=16.0, width=32, height=33)
    path = tmp_path / "intrinsics.txt"
    formats.write_intrinsics(path, k)
    loaded = formats.read_intrinsics(path)
    assert loaded == k


def test_png_round_trip_uint8_exact(tmp_path):
    rng = np.random.default_rng(2)
    image = rng.integers(0, 256, (16, 16, 3)).astype(np.uint8) / 255.0
    path = tmp_path / "img.png"
    formats.write_png(path, image)
    assert np.allclose(formats.read_png(path), image, atol=1e-7)


def test_encode_png_deterministic():
    rng = np.random.default_rng(3)
    image = rng.random((20, 20, 3))
    assert formats.encode_png(image) == formats.encode_png(image)


def test_config_parse():
    text = """
    # a comment
    epochs = 10
    lr = 1e-3   # trailing comment
    variant = full
    """
    parsed = formats.parse_config_text(text)
    assert parsed == {"epochs": "10", "lr": "1e-3", "variant": "full"}


def test_config_rejects_garbage():
    with pytest.raises(formats.FormatError):
        formats.parse_config_text("not a key value line")
    with pytest.raises(formats.FormatError):
        formats.parse_config_text("a = 1\na = 2")
    with pytest.raises(formats.FormatError):
        formats.parse_config_text(" = 3")
