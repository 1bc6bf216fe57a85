"""File formats: PFM depth maps, pose files, intrinsics, PNG images, and the
flat key = value config syntax used by the CLI."""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from .geometry import CameraIntrinsics, RigidTransform


class FormatError(ValueError):
    pass


# ---------------------------------------------------------------------------
# PFM (grayscale, little-endian, scale -1.0; scanlines stored bottom-up)

def write_pfm(path, values: np.ndarray) -> None:
    values = np.asarray(values, dtype=np.float32)
    if values.ndim != 2:
        raise FormatError(f"PFM writer expects an HxW array, got shape {values.shape}")
    h, w = values.shape
    with open(path, "wb") as f:
        f.write(b"Pf\n")
        f.write(f"{w} {h}\n".encode("ascii"))
        f.write(b"-1.0\n")
        f.write(np.ascontiguousarray(values[::-1]).tobytes())


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as f:
        header = f.readline().strip()
        if header != b"Pf":
            raise FormatError(f"not a grayscale PFM file: header {header!r}")
        dims = f.readline().split()
        if len(dims) != 2:
            raise FormatError("malformed PFM dimensions line")
        w, h = int(dims[0]), int(dims[1])
        scale = float(f.readline().strip())
        data = np.frombuffer(f.read(w * h * 4), dtype="<f4" if scale < 0 else ">f4")
        if data.size != w * h:
            raise FormatError("truncated PFM payload")
    return data.reshape(h, w)[::-1].astype(np.float32)


# ---------------------------------------------------------------------------
# Pose files: one transform per line, 12 whitespace-separated decimals,
# row-major [R|t]

def format_pose_line(t: RigidTransform) -> str:
    return " ".join(f"{v:.17g}" for v in t.matrix34.reshape(12))


def write_poses(path, transforms: list[RigidTransform]) -> None:
    with open(path, "w") as f:
        for t in transforms:
            f.write(format_pose_line(t) + "\n")


def parse_pose_line(line: str) -> RigidTransform:
    parts = line.split()
    if len(parts) != 12:
        raise FormatError(f"pose line must have 12 numbers, got {len(parts)}")
    return RigidTransform.from_matrix34(np.array([float(p) for p in parts]).reshape(3, 4))


def read_poses(path) -> list[RigidTransform]:
    out = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if line:
            out.append(parse_pose_line(line))
    return out


# ---------------------------------------------------------------------------
# Intrinsics: single line "fx fy cx cy width height"

def write_intrinsics(path, k: CameraIntrinsics) -> None:
    Path(path).write_text(f"{k.fx:.17g} {k.fy:.17g} {k.cx:.17g} {k.cy:.17g} {k.width} {k.height}\n")


def read_intrinsics(path) -> CameraIntrinsics:
    parts = Path(path).read_text().split()
    if len(parts) != 6:
        raise FormatError(f"intrinsics file must have 6 values, got {len(parts)}")
    return CameraIntrinsics(
        float(parts[0]), float(parts[1]), float(parts[2]), float(parts[3]),
        int(parts[4]), int(parts[5]),
    )


# ---------------------------------------------------------------------------
# Images: float arrays in [0,1] <-> 8-bit PNG

def to_uint8(image: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(np.asarray(image) * 255.0), 0, 255).astype(np.uint8)


def from_uint8(raw: np.ndarray) -> np.ndarray:
    return raw.astype(np.float32) / 255.0


def write_png(path, image: np.ndarray) -> None:
    PILImage.fromarray(to_uint8(image)).save(path, format="PNG")


def read_png(path) -> np.ndarray:
    return from_uint8(np.asarray(PILImage.open(path).convert("RGB")))


def encode_png(image: np.ndarray) -> bytes:
    buf = io.BytesIO()
    PILImage.fromarray(to_uint8(image)).save(buf, format="PNG")
    return buf.getvalue()


def decode_png(payload: bytes) -> np.ndarray:
    return from_uint8(np.asarray(PILImage.open(io.BytesIO(payload)).convert("RGB")))


def depth_to_image(depth: np.ndarray, d_min: float, d_max: float) -> np.ndarray:
    """Grayscale visualization of a depth map (near = bright)."""
    norm = np.clip((np.asarray(depth, dtype=np.float64) - d_min) / (d_max - d_min), 0.0, 1.0)
    return np.repeat((1.0 - norm)[..., None], 3, axis=-1)


# ---------------------------------------------------------------------------
# Flat key = value config with # comments

def parse_config_text(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"config line {lineno}: expected key = value, got {raw.strip()!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise FormatError(f"config line {lineno}: empty key")
        if key in out:
            raise FormatError(f"config line {lineno}: duplicate key {key!r}")
        out[key] = value.strip()
    return out


def read_config(path) -> dict[str, str]:
    return parse_config_text(Path(path).read_text())


def write_config(path, values: dict) -> None:
    with open(path, "w") as f:
        for key, value in values.items():
            f.write(f"{key} = {value}\n")
