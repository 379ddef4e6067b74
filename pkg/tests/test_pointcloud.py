import numpy as np
import pytest

from dexforge.errors import (
    DimensionMismatch,
    MissingProvenance,
    NoGeometry,
    ParseError,
    ValidationError,
)
from dexforge.geometry import Pose
from dexforge.handmodel import parse_hand
from dexforge.pointcloud import (
    DEFAULT_DEPTH_SCALE,
    ORIGIN_HAND,
    ORIGIN_SCENE,
    CameraIntrinsics,
    PointCloud,
    RgbdFrame,
    compose_scene,
    crop_box,
    downsample_fps,
    downsample_voxel,
    load_frame,
    read_mask_pgm,
    read_pgm16,
    read_ppm,
    remove_hand_points,
    reproject,
    sample_hand_surface,
    save_frame,
    unproject,
    write_mask_pgm,
    write_pgm16,
    write_ppm,
)

K = CameraIntrinsics(fx=100.0, fy=120.0, cx=1.5, cy=1.0, width=4, height=3,
                     depth_scale=0.001)


def smooth_frame(intr, seed=0):
    rng = np.random.default_rng(seed)
    rows, cols = np.meshgrid(np.arange(intr.height), np.arange(intr.width), indexing="ij")
    depth = (2000 + 300 * np.sin(cols / 7.0) + 200 * np.cos(rows / 5.0)).astype(np.uint16)
    color = rng.integers(0, 256, (intr.height, intr.width, 3), dtype=np.uint8)
    return RgbdFrame(color, depth, intr)


def test_intrinsics_round_trip_and_validation():
    again = CameraIntrinsics.from_json(K.to_json())
    assert again == K
    with pytest.raises(ValidationError):
        CameraIntrinsics(fx=0.0, fy=1.0, cx=0, cy=0, width=4, height=3)
    with pytest.raises(ValidationError):
        CameraIntrinsics(fx=1.0, fy=1.0, cx=0, cy=0, width=0, height=3)


def test_unproject_oracle_pixel():
    depth = np.zeros((3, 4), dtype=np.uint16)
    depth[2, 3] = 500
    color = np.zeros((3, 4, 3), dtype=np.uint8)
    color[2, 3] = (10, 20, 30)
    cloud = unproject(RgbdFrame(color, depth, K))
    assert len(cloud) == 1
    z = 500 * 0.001
    assert cloud.xyz[0] == pytest.approx([z * (3 - 1.5) / 100.0, z * (2 - 1.0) / 120.0, z])
    assert tuple(cloud.rgb[0]) == (10, 20, 30)
    assert tuple(cloud.pixels[0]) == (3, 2)  # (u, v) = (col, row)
    assert cloud.origins[0] == ORIGIN_SCENE


def test_unproject_skips_zero_depth_and_mask():
    frame = smooth_frame(K)
    full = unproject(frame)
    assert len(full) == K.width * K.height
    mask = np.zeros((3, 4), dtype=bool)
    mask[0, :] = True
    masked = unproject(frame, mask)
    assert len(masked) == K.width * (K.height - 1)
    assert (masked.pixels[:, 1] > 0).all()
    with pytest.raises(DimensionMismatch):
        unproject(frame, np.zeros((2, 2), dtype=bool))


def test_depth_round_trip_within_one_quantization_step():
    intr = CameraIntrinsics(fx=180.0, fy=180.0, cx=15.5, cy=11.5, width=32,
                            height=24, depth_scale=DEFAULT_DEPTH_SCALE)
    for seed in range(10):
        frame = smooth_frame(intr, seed)
        cloud = unproject(frame)
        back = reproject(cloud, intr)
        # source pixels survive, and every pixel rounds back to within 1 unit
        diff = back.depth.astype(int) - frame.depth.astype(int)
        assert np.abs(diff).max() <= 1
        assert np.array_equal(back.color, frame.color)


def test_zbuffer_keeps_nearest():
    intr = CameraIntrinsics(fx=50.0, fy=50.0, cx=2.0, cy=2.0, width=5, height=5,
                            depth_scale=0.001)
    xyz = np.array([[0.0, 0.0, 1.0], [0.0, 0.0, 0.4], [0.0, 0.0, 0.7]])
    rgb = np.array([[255, 0, 0], [0, 255, 0], [0, 0, 255]], dtype=np.uint8)
    for perm in ([0, 1, 2], [2, 1, 0], [1, 0, 2]):
        frame = reproject(PointCloud(xyz[perm], rgb[perm]), intr)
        assert frame.depth[2, 2] == 400
        assert tuple(frame.color[2, 2]) == (0, 255, 0)
        assert (frame.depth > 0).sum() == 1


def test_reproject_drops_unprojectable_points():
    intr = CameraIntrinsics(fx=50.0, fy=50.0, cx=2.0, cy=2.0, width=5, height=5,
                            depth_scale=0.001)
    xyz = np.array([
        [0.0, 0.0, -1.0],   # behind the camera
        [9.0, 0.0, 0.5],    # projects far outside the image
        [0.0, 0.0, 100.0],  # quantized depth overflows 16 bits
    ])
    frame = reproject(PointCloud(xyz, np.zeros((3, 3), dtype=np.uint8)), intr)
    assert not frame.depth.any()


def test_remove_hand_points():
    frame = smooth_frame(K)
    cloud = unproject(frame)
    mask = np.zeros((3, 4), dtype=bool)
    mask[:, 0] = True
    kept = remove_hand_points(cloud, mask)
    assert len(kept) == 9
    assert (kept.pixels[:, 0] > 0).all()
    bare = PointCloud(cloud.xyz, cloud.rgb)
    with pytest.raises(MissingProvenance):
        remove_hand_points(bare, mask)


def test_dfpc_round_trip_all_flag_combinations():
    rng = np.random.default_rng(1)
    n = 50
    xyz = rng.normal(size=(n, 3)).astype(np.float32).astype(np.float64)
    rgb = rng.integers(0, 256, (n, 3), dtype=np.uint8)
    pixels = rng.integers(0, 100, (n, 2)).astype(np.int32)
    origins = rng.integers(0, 2, n).astype(np.uint8)
    for px, og in [(None, None), (pixels, None), (None, origins), (pixels, origins)]:
        cloud = PointCloud(xyz, rgb, px, og)
        again = PointCloud.from_bytes(cloud.to_bytes())
        assert np.array_equal(again.xyz, xyz)  # f32 grid in, f32 grid out
        assert np.array_equal(again.rgb, rgb)
        assert (px is None) == (again.pixels is None)
        assert (og is None) == (again.origins is None)
        if px is not None:
            assert np.array_equal(again.pixels, px)
        assert again.to_bytes() == cloud.to_bytes()


def test_dfpc_rejects_garbage():
    with pytest.raises(ParseError):
        PointCloud.from_bytes(b"nope")
    good = PointCloud.empty().to_bytes()
    with pytest.raises(ParseError):
        PointCloud.from_bytes(good + b"\x00")
    with pytest.raises(ParseError):
        PointCloud.from_bytes(b"DFPC\x02" + good[5:])


def test_crop_box_is_inclusive():
    xyz = np.array([[0.0, 0.0, 0.0], [1.0, 1.0, 1.0], [2.0, 0.0, 0.0]])
    cloud = PointCloud(xyz, np.zeros((3, 3), dtype=np.uint8))
    kept = crop_box(cloud, (0, 0, 0), (1, 1, 1))
    assert len(kept) == 2
    with pytest.raises(ValidationError):
        crop_box(cloud, (1, 0, 0), (0, 1, 1))


def reference_fps(xyz, n, first):
    """Straight-line re-implementation used as the oracle."""
    chosen = [first]
    dist = np.linalg.norm(xyz - xyz[first], axis=1)
    while len(chosen) < n:
        nxt = int(np.argmax(dist))
        chosen.append(nxt)
        dist = np.minimum(dist, np.linalg.norm(xyz - xyz[nxt], axis=1))
    return chosen


def test_fps_matches_reference_and_is_deterministic():
    rng = np.random.default_rng(3)
    xyz = rng.normal(size=(200, 3))
    cloud = PointCloud(xyz, np.zeros((200, 3), dtype=np.uint8))
    a = downsample_fps(cloud, 40, seed=7)
    b = downsample_fps(cloud, 40, seed=7)
    assert np.array_equal(a.xyz, b.xyz)
    first = int(np.random.default_rng(7).integers(200))
    want = xyz[reference_fps(xyz, 40, first)]
    assert np.array_equal(a.xyz, want)
    # a different seed starts somewhere else
    c = downsample_fps(cloud, 40, seed=8)
    assert not np.array_equal(a.xyz, c.xyz)


def test_fps_is_rigid_motion_equivariant():
    rng = np.random.default_rng(5)
    xyz = rng.normal(size=(120, 3))
    cloud = PointCloud(xyz, np.zeros((120, 3), dtype=np.uint8))
    move = Pose.from_xyz_rpy((0.3, -0.2, 0.9), (0.4, 1.1, -0.6))
    moved = PointCloud(move.apply(xyz), cloud.rgb)
    sel_a = downsample_fps(cloud, 30, seed=2)
    sel_b = downsample_fps(moved, 30, seed=2)
    assert np.allclose(move.apply(sel_a.xyz), sel_b.xyz, atol=1e-9)


def test_fps_small_inputs():
    xyz = np.array([[0.0, 0, 0], [1.0, 0, 0], [0.0, 2.0, 0]])
    cloud = PointCloud(xyz, np.zeros((3, 3), dtype=np.uint8))
    assert len(downsample_fps(cloud, 10)) == 3  # n > N keeps everything
    assert len(downsample_fps(cloud, 1)) == 1
    assert len(downsample_fps(PointCloud.empty(), 4)) == 0
    with pytest.raises(ValidationError):
        downsample_fps(cloud, 0)


def test_voxel_downsample_keeps_first_per_cell():
    xyz = np.array([
        [0.01, 0.01, 0.01],
        [0.02, 0.02, 0.02],   # same 0.1-voxel as the first point
        [0.55, 0.0, 0.0],
        [0.56, 0.01, 0.0],    # same voxel as the third point
    ])
    rgb = np.arange(12, dtype=np.uint8).reshape(4, 3)
    out = downsample_voxel(PointCloud(xyz, rgb), 0.1)
    assert len(out) == 2
    assert np.array_equal(out.rgb, rgb[[0, 2]])
    with pytest.raises(ValidationError):
        downsample_voxel(PointCloud.empty(), 0.0)


def test_compose_scene_tags_origins():
    scene = PointCloud(np.zeros((2, 3)), np.zeros((2, 3), dtype=np.uint8),
                       np.zeros((2, 2), dtype=np.int32))
    hand = PointCloud(np.ones((3, 3)), np.zeros((3, 3), dtype=np.uint8))
    mix = compose_scene(scene, hand)
    assert len(mix) == 5
    assert list(mix.origins) == [ORIGIN_SCENE] * 2 + [ORIGIN_HAND] * 3
    assert mix.pixels is None  # hand points have no source pixels


def test_sample_hand_surface_counts_and_tags(twig):
    q = np.zeros(4)
    cloud = sample_hand_surface(twig, q, density=50000.0, seed=4)
    assert len(cloud) > 500
    assert (cloud.origins == ORIGIN_HAND).all()
    again = sample_hand_surface(twig, q, density=50000.0, seed=4)
    assert np.array_equal(cloud.xyz, again.xyz)
    # a world pose rigidly moves every sample
    world = Pose.from_xyz_rpy((0.5, 0.0, 0.2), (0.0, 0.4, 0.0))
    posed = sample_hand_surface(twig, q, world, density=50000.0, seed=4)
    assert np.allclose(posed.xyz, world.apply(cloud.xyz), atol=1e-12)


def test_sphere_samples_lie_on_the_sphere():
    doc = {
        "name": "ball", "side": "right",
        "links": [
            {"name": "palm", "visual": {"type": "sphere", "radius": 0.05,
                                        "color": [1, 0, 0]}},
            {"name": "tip", "visual": {"type": "sphere", "radius": 0.01}},
        ],
        "joints": [{
            "name": "j0", "type": "revolute", "parent": "palm", "child": "tip",
            "origin": {"xyz": [0, 0, 0.2], "rpy": [0, 0, 0]},
            "axis": [0, 0, 1], "limit": {"lower": -1.0, "upper": 1.0},
        }],
        "fingertips": ["tip"],
        "faas_map": {"j0": 0},
    }
    model = parse_hand(doc)
    cloud = sample_hand_surface(model, np.zeros(1), density=100000.0)
    palm_pts = cloud.xyz[np.linalg.norm(cloud.xyz, axis=1) < 0.1]
    r = np.linalg.norm(palm_pts, axis=1)
    assert np.abs(r - 0.05).max() < 1e-9
    area = 4 * np.pi * 0.05**2
    assert len(palm_pts) == round(area * 100000.0)


def test_strict_sampling_raises_on_bare_link():
    doc = {
        "name": "bare", "side": "right",
        "links": [{"name": "palm"}, {"name": "tip",
                                     "visual": {"type": "sphere", "radius": 0.01}}],
        "joints": [{
            "name": "j0", "type": "revolute", "parent": "palm", "child": "tip",
            "origin": {"xyz": [0, 0, 0.05], "rpy": [0, 0, 0]},
            "axis": [1, 0, 0], "limit": {"lower": -1.0, "upper": 1.0},
        }],
        "fingertips": ["tip"],
        "faas_map": {"j0": 0},
    }
    model = parse_hand(doc)
    with pytest.raises(NoGeometry, match="palm"):
        sample_hand_surface(model, np.zeros(1), strict=True)
    assert len(sample_hand_surface(model, np.zeros(1))) > 0


def test_netpbm_round_trips(tmp_path):
    rng = np.random.default_rng(9)
    color = rng.integers(0, 256, (6, 5, 3), dtype=np.uint8)
    depth = rng.integers(0, 60000, (6, 5), dtype=np.uint16)
    mask = rng.random((6, 5)) < 0.5

    write_ppm(tmp_path / "c.ppm", color)
    assert np.array_equal(read_ppm(tmp_path / "c.ppm"), color)
    write_pgm16(tmp_path / "d.pgm", depth)
    assert np.array_equal(read_pgm16(tmp_path / "d.pgm"), depth)
    write_mask_pgm(tmp_path / "m.pgm", mask)
    assert np.array_equal(read_mask_pgm(tmp_path / "m.pgm"), mask)

    # 16-bit PGM is big-endian per the format; check the raw bytes
    raw = (tmp_path / "d.pgm").read_bytes()
    header_end = raw.index(b"65535\n") + 6
    first = int.from_bytes(raw[header_end:header_end + 2], "big")
    assert first == depth[0, 0]


def test_netpbm_header_comments(tmp_path):
    p = tmp_path / "c.ppm"
    body = bytes([1, 2, 3, 4, 5, 6])
    p.write_bytes(b"P6\n# a comment\n2 1\n# another\n255\n" + body)
    img = read_ppm(p)
    assert img.shape == (1, 2, 3)
    assert img[0, 0, 0] == 1
    wrong_magic = tmp_path / "d.pgm"
    write_pgm16(wrong_magic, np.zeros((1, 2), dtype=np.uint16))
    with pytest.raises(ParseError):
        read_ppm(wrong_magic)


def test_frame_save_load(tmp_path):
    frame = smooth_frame(K, seed=2)
    save_frame(frame, tmp_path / "c.ppm", tmp_path / "d.pgm", tmp_path / "k.json")
    again = load_frame(tmp_path / "c.ppm", tmp_path / "d.pgm", tmp_path / "k.json")
    assert np.array_equal(again.color, frame.color)
    assert np.array_equal(again.depth, frame.depth)
    assert again.intrinsics == frame.intrinsics
