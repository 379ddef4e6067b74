"""RGB-D <-> pointcloud pipeline for visual alignment.

Pinhole unprojection with per-point source-pixel provenance, human-hand pixel
removal, robot-hand surface sampling from the hand model's link primitives,
z-buffered reprojection back to RGB-D, plus the crop / farthest-point
downsample used to build policy observations.

Frame fixtures are dependency-free: color as binary PPM (P6), depth as 16-bit
big-endian PGM (P5), masks as 8-bit PGM where 255 = masked, and a JSON
sidecar for intrinsics.  Clouds serialize to a small tagged binary ("DFPC")
for content-addressed storage.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import (
    DimensionMismatch,
    MissingProvenance,
    NoGeometry,
    ParseError,
    ValidationError,
)
from .geometry import Pose
from .handmodel import HandModel
from .kinematics import forward_kinematics

DEFAULT_DEPTH_SCALE = 0.00025  # meters per 16-bit depth unit
ORIGIN_SCENE = 0
ORIGIN_HAND = 1


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    depth_scale: float = DEFAULT_DEPTH_SCALE

    def __post_init__(self) -> None:
        if self.fx <= 0 or self.fy <= 0:
            raise ValidationError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if self.width < 1 or self.height < 1:
            raise ValidationError(f"image size must be >= 1x1, got {self.width}x{self.height}")

    def to_json(self) -> dict:
        return {
            "fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
            "width": self.width, "height": self.height, "depth_scale": self.depth_scale,
        }

    @staticmethod
    def from_json(doc: dict) -> "CameraIntrinsics":
        try:
            return CameraIntrinsics(
                fx=float(doc["fx"]), fy=float(doc["fy"]),
                cx=float(doc["cx"]), cy=float(doc["cy"]),
                width=int(doc["width"]), height=int(doc["height"]),
                depth_scale=float(doc.get("depth_scale", DEFAULT_DEPTH_SCALE)),
            )
        except KeyError as exc:
            raise ValidationError(f"intrinsics: missing required key {exc}") from exc


@dataclass
class RgbdFrame:
    color: np.ndarray  # (H, W, 3) uint8
    depth: np.ndarray  # (H, W) uint16 depth units, 0 = invalid
    intrinsics: CameraIntrinsics

    def __post_init__(self) -> None:
        self.color = np.asarray(self.color, dtype=np.uint8)
        self.depth = np.asarray(self.depth, dtype=np.uint16)
        k = self.intrinsics
        if self.color.shape != (k.height, k.width, 3):
            raise DimensionMismatch(
                f"color shape {self.color.shape} != intrinsics {k.height}x{k.width}x3"
            )
        if self.depth.shape != (k.height, k.width):
            raise DimensionMismatch(
                f"depth shape {self.depth.shape} != intrinsics {k.height}x{k.width}"
            )


@dataclass
class PointCloud:
    """Colored points; ``pixels`` holds each point's source (u, v) when known."""

    xyz: np.ndarray  # (N, 3) float64, meters
    rgb: np.ndarray  # (N, 3) uint8
    pixels: np.ndarray | None = None  # (N, 2) int32, (u, v) = (col, row)
    origins: np.ndarray | None = None  # (N,) uint8, ORIGIN_SCENE / ORIGIN_HAND

    def __post_init__(self) -> None:
        self.xyz = np.asarray(self.xyz, dtype=np.float64).reshape(-1, 3)
        self.rgb = np.asarray(self.rgb, dtype=np.uint8).reshape(-1, 3)
        n = self.xyz.shape[0]
        if self.rgb.shape[0] != n:
            raise DimensionMismatch(f"{n} points but {self.rgb.shape[0]} colors")
        if self.pixels is not None:
            self.pixels = np.asarray(self.pixels, dtype=np.int32).reshape(-1, 2)
            if self.pixels.shape[0] != n:
                raise DimensionMismatch(f"{n} points but {self.pixels.shape[0]} source pixels")
        if self.origins is not None:
            self.origins = np.asarray(self.origins, dtype=np.uint8).reshape(-1)
            if self.origins.shape[0] != n:
                raise DimensionMismatch(f"{n} points but {self.origins.shape[0]} origin tags")
        if n and not np.isfinite(self.xyz).all():
            raise ValidationError("pointcloud contains non-finite coordinates")

    def __len__(self) -> int:
        return int(self.xyz.shape[0])

    def take(self, idx) -> "PointCloud":
        return PointCloud(
            self.xyz[idx],
            self.rgb[idx],
            None if self.pixels is None else self.pixels[idx],
            None if self.origins is None else self.origins[idx],
        )

    @staticmethod
    def empty() -> "PointCloud":
        return PointCloud(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.uint8))

    def to_bytes(self) -> bytes:
        """Tagged little-endian blob: magic 'DFPC', version, flags, N, payload arrays."""
        flags = (1 if self.pixels is not None else 0) | (2 if self.origins is not None else 0)
        parts = [
            b"DFPC",
            struct.pack("<BBI", 1, flags, len(self)),
            self.xyz.astype("<f4").tobytes(),
            self.rgb.tobytes(),
        ]
        if self.pixels is not None:
            parts.append(self.pixels.astype("<i4").tobytes())
        if self.origins is not None:
            parts.append(self.origins.tobytes())
        return b"".join(parts)

    @staticmethod
    def from_bytes(raw: bytes) -> "PointCloud":
        if len(raw) < 10 or raw[:4] != b"DFPC":
            raise ParseError("not a DFPC cloud blob")
        version, flags, n = struct.unpack("<BBI", raw[4:10])
        if version != 1:
            raise ParseError(f"unsupported DFPC version {version}")
        off = 10
        xyz = np.frombuffer(raw[off : off + 12 * n], dtype="<f4").astype(np.float64).reshape(n, 3)
        off += 12 * n
        rgb = np.frombuffer(raw[off : off + 3 * n], dtype=np.uint8).reshape(n, 3)
        off += 3 * n
        pixels = None
        if flags & 1:
            pixels = np.frombuffer(raw[off : off + 8 * n], dtype="<i4").reshape(n, 2)
            off += 8 * n
        origins = None
        if flags & 2:
            origins = np.frombuffer(raw[off : off + n], dtype=np.uint8)
            off += n
        if off != len(raw):
            raise ParseError(f"DFPC blob has {len(raw) - off} trailing bytes")
        return PointCloud(xyz, rgb.copy(), pixels, None if origins is None else origins.copy())


def unproject(frame: RgbdFrame, mask: np.ndarray | None = None) -> PointCloud:
    """Pixels with depth > 0 (and not masked) to camera-frame points.

    p = d * depth_scale * ((u - cx)/fx, (v - cy)/fy, 1); colors and source
    pixels ride along.
    """
    k = frame.intrinsics
    valid = frame.depth > 0
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != frame.depth.shape:
            raise DimensionMismatch(f"mask shape {mask.shape} != frame {frame.depth.shape}")
        valid &= ~mask
    v, u = np.nonzero(valid)
    z = frame.depth[v, u].astype(np.float64) * k.depth_scale
    x = z * (u - k.cx) / k.fx
    y = z * (v - k.cy) / k.fy
    return PointCloud(
        np.column_stack([x, y, z]),
        frame.color[v, u],
        np.column_stack([u, v]).astype(np.int32),
        np.full(len(u), ORIGIN_SCENE, dtype=np.uint8),
    )


def remove_hand_points(cloud: PointCloud, mask: np.ndarray) -> PointCloud:
    """Drop points whose source pixel is masked; survivor order preserved."""
    if cloud.pixels is None:
        raise MissingProvenance("cloud has no source pixels; cannot apply a pixel mask")
    mask = np.asarray(mask, dtype=bool)
    u = cloud.pixels[:, 0]
    v = cloud.pixels[:, 1]
    if len(cloud) and (v.max() >= mask.shape[0] or u.max() >= mask.shape[1]):
        raise DimensionMismatch("source pixels fall outside the mask image")
    keep = ~mask[v, u] if len(cloud) else np.zeros(0, dtype=bool)
    return cloud.take(keep)


def sample_hand_surface(
    model: HandModel,
    q,
    world_dummy: Pose | None = None,
    offset: Pose | None = None,
    density: float = 20000.0,
    seed: int = 0,
    strict: bool = False,
) -> PointCloud:
    """Surface-uniform samples of every link primitive at the posed hand.

    Point count per primitive is round(area * density); colors come from the
    link's visual.  Links without a primitive are skipped unless ``strict``,
    which raises NoGeometry naming the link.
    """
    rng = np.random.default_rng(seed)
    fk = forward_kinematics(model, q, world_dummy, offset)
    pts: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    for link in model.links:
        if link.visual is None:
            if strict:
                raise NoGeometry(f"link '{link.name}' has no visual primitive")
            continue
        local = _sample_primitive(link.visual, density, rng)
        if local.shape[0] == 0:
            continue
        pts.append(fk.link_poses[link.name].apply(local))
        color = np.clip(np.asarray(link.visual.color) * 255.0, 0, 255).astype(np.uint8)
        cols.append(np.tile(color, (local.shape[0], 1)))
    if not pts:
        return PointCloud.empty()
    xyz = np.vstack(pts)
    return PointCloud(
        xyz,
        np.vstack(cols),
        None,
        np.full(xyz.shape[0], ORIGIN_HAND, dtype=np.uint8),
    )


def _sphere_points(radius: float, n: int, rng) -> np.ndarray:
    z = rng.uniform(-1.0, 1.0, n)
    phi = rng.uniform(0.0, 2.0 * np.pi, n)
    r_xy = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    return radius * np.column_stack([r_xy * np.cos(phi), r_xy * np.sin(phi), z])


def _sample_primitive(visual, density: float, rng) -> np.ndarray:
    if visual.kind == "sphere":
        area = 4.0 * np.pi * visual.radius**2
        return _sphere_points(visual.radius, int(round(area * density)), rng)
    if visual.kind == "box":
        sx, sy, sz = visual.size
        face_areas = np.array([sy * sz, sy * sz, sx * sz, sx * sz, sx * sy, sx * sy])
        total = face_areas.sum()
        n = int(round(total * density))
        if n == 0:
            return np.zeros((0, 3))
        face = rng.choice(6, size=n, p=face_areas / total)
        a = rng.uniform(-0.5, 0.5, n)
        b = rng.uniform(-0.5, 0.5, n)
        out = np.empty((n, 3))
        sign = np.where(face % 2 == 0, 0.5, -0.5)
        ax = face // 2  # 0: +-x faces, 1: +-y, 2: +-z
        size = np.array([sx, sy, sz])
        for i, (f, s) in enumerate(zip(ax, sign)):
            coords = [a[i], b[i]]
            p = np.empty(3)
            p[f] = s * size[f]
            others = [d for d in range(3) if d != f]
            p[others[0]] = coords[0] * size[others[0]]
            p[others[1]] = coords[1] * size[others[1]]
            out[i] = p
        return out
    if visual.kind == "capsule":
        r, length = visual.radius, visual.length
        cap_area = 4.0 * np.pi * r**2
        cyl_area = 2.0 * np.pi * r * length
        n = int(round((cap_area + cyl_area) * density))
        if n == 0:
            return np.zeros((0, 3))
        on_cap = rng.uniform(0.0, 1.0, n) < cap_area / (cap_area + cyl_area)
        out = np.empty((n, 3))
        n_cap = int(on_cap.sum())
        if n_cap:
            sph = _sphere_points(r, n_cap, rng)
            sph[:, 2] += np.where(sph[:, 2] >= 0.0, length / 2.0, -length / 2.0)
            out[on_cap] = sph
        n_cyl = n - n_cap
        if n_cyl:
            phi = rng.uniform(0.0, 2.0 * np.pi, n_cyl)
            z = rng.uniform(-length / 2.0, length / 2.0, n_cyl)
            out[~on_cap] = np.column_stack([r * np.cos(phi), r * np.sin(phi), z])
        return out
    raise NoGeometry(f"unknown primitive kind '{visual.kind}'")


def reproject(cloud: PointCloud, intrinsics: CameraIntrinsics) -> RgbdFrame:
    """Pinhole projection with a z-buffer: each pixel keeps its nearest point.

    Points behind the camera, outside the image, or whose quantized depth
    leaves the 16-bit range contribute nothing; empty pixels stay depth 0.
    """
    k = intrinsics
    color = np.zeros((k.height, k.width, 3), dtype=np.uint8)
    depth = np.zeros((k.height, k.width), dtype=np.uint16)
    if len(cloud) == 0:
        return RgbdFrame(color, depth, k)
    z = cloud.xyz[:, 2]
    front = z > 0
    u = np.rint(k.fx * cloud.xyz[:, 0] / np.where(front, z, 1.0) + k.cx).astype(np.int64)
    v = np.rint(k.fy * cloud.xyz[:, 1] / np.where(front, z, 1.0) + k.cy).astype(np.int64)
    du = np.rint(z / k.depth_scale)
    ok = front & (u >= 0) & (u < k.width) & (v >= 0) & (v < k.height)
    ok &= (du >= 1) & (du <= np.iinfo(np.uint16).max)
    idx = np.nonzero(ok)[0]
    # farthest first, nearest written last -> nearest wins each pixel
    order = idx[np.argsort(-z[idx], kind="stable")]
    depth[v[order], u[order]] = du[order].astype(np.uint16)
    color[v[order], u[order]] = cloud.rgb[order]
    return RgbdFrame(color, depth, k)


def crop_box(cloud: PointCloud, lo, hi) -> PointCloud:
    """Keep points with lo <= p <= hi componentwise."""
    lo = np.asarray(lo, dtype=float).reshape(3)
    hi = np.asarray(hi, dtype=float).reshape(3)
    if np.any(lo > hi):
        raise ValidationError(f"crop box lo {lo.tolist()} exceeds hi {hi.tolist()}")
    keep = np.all((cloud.xyz >= lo) & (cloud.xyz <= hi), axis=1)
    return cloud.take(keep)


def downsample_fps(cloud: PointCloud, n: int, seed: int = 0) -> PointCloud:
    """Farthest-point sample to min(n, N) points, seeded start, deterministic."""
    if n < 1:
        raise ValidationError(f"downsample target must be >= 1, got {n}")
    npts = len(cloud)
    if npts == 0:
        return cloud
    n_sel = min(n, npts)
    first = int(np.random.default_rng(seed).integers(npts))
    idx = _kernels.fps_select(np.ascontiguousarray(cloud.xyz), n_sel, first)
    return cloud.take(idx)


def downsample_voxel(cloud: PointCloud, voxel_size: float) -> PointCloud:
    """Keep the first point landing in each voxel (scan order), deterministic."""
    if voxel_size <= 0:
        raise ValidationError(f"voxel size must be positive, got {voxel_size}")
    if len(cloud) == 0:
        return cloud
    keys = np.floor(cloud.xyz / voxel_size).astype(np.int64)
    _, first_idx = np.unique(keys, axis=0, return_index=True)
    return cloud.take(np.sort(first_idx))


def compose_scene(scene: PointCloud, hand_samples: PointCloud) -> PointCloud:
    """Concatenate scene + robot-hand points with per-point origin tags."""
    def tags(c: PointCloud, default: int) -> np.ndarray:
        if c.origins is not None:
            return c.origins
        return np.full(len(c), default, dtype=np.uint8)

    pixels = None
    if scene.pixels is not None and hand_samples.pixels is not None:
        pixels = np.vstack([scene.pixels, hand_samples.pixels])
    return PointCloud(
        np.vstack([scene.xyz, hand_samples.xyz]),
        np.vstack([scene.rgb, hand_samples.rgb]),
        pixels,
        np.concatenate([tags(scene, ORIGIN_SCENE), tags(hand_samples, ORIGIN_HAND)]),
    )


# ---------------------------------------------------------------------------
# Fixture file formats (PPM / PGM / intrinsics sidecar)

def _read_netpbm_header(raw: bytes, magic: bytes, path) -> tuple[int, int, int, int]:
    """-> (width, height, maxval, data offset). Supports '#' comments."""
    if not raw.startswith(magic):
        raise ParseError(f"{path}: expected {magic.decode()} file")
    tokens: list[int] = []
    i = len(magic)
    while len(tokens) < 3:
        if i >= len(raw):
            raise ParseError(f"{path}: truncated header")
        c = raw[i : i + 1]
        if c == b"#":
            while i < len(raw) and raw[i : i + 1] != b"\n":
                i += 1
        elif c.isspace():
            i += 1
        else:
            j = i
            while j < len(raw) and not raw[j : j + 1].isspace():
                j += 1
            try:
                tokens.append(int(raw[i:j]))
            except ValueError as exc:
                raise ParseError(f"{path}: bad header token {raw[i:j]!r}") from exc
            i = j
    return tokens[0], tokens[1], tokens[2], i + 1  # single whitespace after maxval


def write_ppm(path, color: np.ndarray) -> None:
    color = np.asarray(color, dtype=np.uint8)
    h, w, _ = color.shape
    Path(path).write_bytes(f"P6\n{w} {h}\n255\n".encode() + color.tobytes())


def read_ppm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    w, h, maxval, off = _read_netpbm_header(raw, b"P6", path)
    if maxval != 255:
        raise ParseError(f"{path}: only maxval 255 PPM supported")
    data = raw[off : off + w * h * 3]
    if len(data) != w * h * 3:
        raise ParseError(f"{path}: truncated pixel data")
    return np.frombuffer(data, dtype=np.uint8).reshape(h, w, 3).copy()


def write_pgm16(path, depth: np.ndarray) -> None:
    depth = np.asarray(depth, dtype=np.uint16)
    h, w = depth.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n65535\n".encode() + depth.astype(">u2").tobytes())


def read_pgm16(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    w, h, maxval, off = _read_netpbm_header(raw, b"P5", path)
    if maxval > 255:
        data = raw[off : off + w * h * 2]
        if len(data) != w * h * 2:
            raise ParseError(f"{path}: truncated pixel data")
        return np.frombuffer(data, dtype=">u2").reshape(h, w).astype(np.uint16)
    data = raw[off : off + w * h]
    if len(data) != w * h:
        raise ParseError(f"{path}: truncated pixel data")
    return np.frombuffer(data, dtype=np.uint8).reshape(h, w).astype(np.uint16)


def write_mask_pgm(path, mask: np.ndarray) -> None:
    mask = np.asarray(mask, dtype=bool)
    h, w = mask.shape
    Path(path).write_bytes(
        f"P5\n{w} {h}\n255\n".encode() + np.where(mask, 255, 0).astype(np.uint8).tobytes()
    )


def read_mask_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    w, h, maxval, off = _read_netpbm_header(raw, b"P5", path)
    if maxval != 255:
        raise ParseError(f"{path}: masks must be 8-bit PGM")
    data = raw[off : off + w * h]
    if len(data) != w * h:
        raise ParseError(f"{path}: truncated pixel data")
    return (np.frombuffer(data, dtype=np.uint8).reshape(h, w) == 255).copy()


def load_intrinsics(path) -> CameraIntrinsics:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid intrinsics JSON: {exc}") from exc
    return CameraIntrinsics.from_json(doc)


def save_intrinsics(intr: CameraIntrinsics, path) -> None:
    Path(path).write_text(json.dumps(intr.to_json(), indent=2, sort_keys=True) + "\n")


def load_frame(color_path, depth_path, intrinsics_path) -> RgbdFrame:
    return RgbdFrame(
        read_ppm(color_path), read_pgm16(depth_path), load_intrinsics(intrinsics_path)
    )


def save_frame(frame: RgbdFrame, color_path, depth_path, intrinsics_path) -> None:
    write_ppm(color_path, frame.color)
    write_pgm16(depth_path, frame.depth)
    save_intrinsics(frame.intrinsics, intrinsics_path)
