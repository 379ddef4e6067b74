"""Command-line entry points.

    dexforge serve --port 8642                     # HTTP session service
    dexforge retarget --hand h.hand.json --recording rec.json --out res.json
    dexforge faas encode|decode|transfer ...       # unified action vectors
    dexforge train-toy --hand h.hand.json --out-dir runs/toy
    dexforge pointcloud unproject|reproject|attach ...
    dexforge dataset pack|stats|mix-preview ...
"""

from __future__ import annotations

import json
from pathlib import Path

import click
import numpy as np

from . import _kernels
from .errors import DexforgeError
from .faas import FaasVector, decode_state, encode_state
from .geometry import Pose
from .handmodel import load_hand
from .pointcloud import (
    PointCloud,
    compose_scene,
    load_frame,
    load_intrinsics,
    read_mask_pgm,
    reproject,
    sample_hand_surface,
    unproject,
    write_pgm16,
    write_ppm,
)
from .retarget import CalibrationProfile, IkConfig, retarget_trajectory
from .session import load_recording

def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",")) if text else ()


def _offset_from_profile(profile_path) -> Pose | None:
    if not profile_path:
        return None
    return CalibrationProfile.load(profile_path).offset


@click.group()
def main() -> None:
    """Dexterous-hand retargeting and unified-action tooling."""


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8642, show_default=True, type=int)
@click.option("--ui-dir", default=None, type=click.Path(exists=True, file_okay=False))
def serve(host: str, port: int, ui_dir) -> None:
    """Run the HTTP session service (add --ui-dir to also serve the panel)."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(ui_dir), host=host, port=port, log_level="info")


@main.command()
@click.option("--hand", "hand_path", required=True, type=click.Path(exists=True))
@click.option("--recording", "recording_path", required=True, type=click.Path(exists=True))
@click.option("--profile", "profile_path", default=None, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--max-iters", default=200, show_default=True, type=int)
def retarget(hand_path, recording_path, profile_path, out_path, max_iters) -> None:
    """Retarget a whole recording and write per-frame joint results."""
    model = load_hand(hand_path)
    rec = load_recording(recording_path)
    offset = _offset_from_profile(profile_path)
    out = retarget_trajectory(
        model,
        [f.targets for f in rec.frames],
        [f.hand_pose for f in rec.frames],
        offset,
        config=IkConfig(max_iters=max_iters),
    )
    doc = {
        "hand": model.name,
        "recording": rec.name,
        "profile": profile_path,
        "kernel_backend": _kernels.backend(),
        "convergence_rate": out.convergence_rate,
        "frames": [
            {
                "q": r.q.tolist(),
                "rms": r.rms,
                "converged": r.converged,
                "iters_used": r.iters_used,
                "residual": r.residual.tolist(),
            }
            for r in out.results
        ],
    }
    Path(out_path).write_text(json.dumps(doc, indent=2) + "\n")
    click.echo(f"{rec.name}: {len(out.results)} frames, "
               f"convergence {out.convergence_rate:.0%} -> {out_path}")


@main.group()
def faas() -> None:
    """Encode/decode/transfer 82-d unified action vectors."""


def _vec_to_doc(vec: FaasVector) -> dict:
    return {"values": vec.values.tolist(), "mask": vec.mask.astype(int).tolist()}


def _vec_from_doc(doc: dict) -> FaasVector:
    return FaasVector(np.asarray(doc["values"]), np.asarray(doc["mask"], dtype=bool))


@faas.command()
@click.option("--hand", "hand_path", required=True, type=click.Path(exists=True))
@click.option("--q", "q_text", required=True, help="comma-separated joint values (radians)")
@click.option("--wrist-xyz", default="0,0,0", show_default=True)
@click.option("--wrist-rpy", default="0,0,0", show_default=True)
@click.option("--out", "out_path", default=None, type=click.Path())
def encode(hand_path, q_text, wrist_xyz, wrist_rpy, out_path) -> None:
    """Encode a hand state into a FAAS vector (JSON values + mask)."""
    model = load_hand(hand_path)
    wrist = Pose.from_xyz_rpy(_floats(wrist_xyz), _floats(wrist_rpy))
    vec = encode_state(model, model.side, wrist, np.asarray(_floats(q_text)))
    doc = _vec_to_doc(vec)
    if out_path:
        Path(out_path).write_text(json.dumps(doc) + "\n")
        click.echo(f"wrote {out_path} ({int(vec.mask.sum())} populated slots)")
    else:
        click.echo(json.dumps(doc))


@faas.command()
@click.option("--hand", "hand_path", required=True, type=click.Path(exists=True))
@click.option("--vec", "vec_path", required=True, type=click.Path(exists=True))
def decode(hand_path, vec_path) -> None:
    """Decode a FAAS vector into a hand's wrist pose and joint values."""
    model = load_hand(hand_path)
    vec = _vec_from_doc(json.loads(Path(vec_path).read_text()))
    st = decode_state(vec, model, model.side)
    xyz, rpy = st.wrist.to_xyz_rpy()
    click.echo(json.dumps({
        "wrist": {"xyz": list(xyz), "rpy": list(rpy)},
        "q": st.q.tolist(),
        "joints": list(model.joint_names),
        "defaulted": list(st.defaulted),
        "clamped": list(st.clamped),
    }, indent=2))


@faas.command()
@click.option("--from-hand", "src_path", required=True, type=click.Path(exists=True))
@click.option("--to-hand", "dst_path", required=True, type=click.Path(exists=True))
@click.option("--q", "q_text", required=True, help="source-hand joint values")
@click.option("--wrist-xyz", default="0,0,0", show_default=True)
@click.option("--wrist-rpy", default="0,0,0", show_default=True)
def transfer(src_path, dst_path, q_text, wrist_xyz, wrist_rpy) -> None:
    """Encode a state on one hand and decode it on another (slot alignment)."""
    src = load_hand(src_path)
    dst = load_hand(dst_path)
    wrist = Pose.from_xyz_rpy(_floats(wrist_xyz), _floats(wrist_rpy))
    vec = encode_state(src, src.side, wrist, np.asarray(_floats(q_text)))
    st = decode_state(vec, dst, dst.side)
    click.echo(json.dumps({
        "from": src.name,
        "to": dst.name,
        "q": st.q.tolist(),
        "joints": list(dst.joint_names),
        "defaulted": list(st.defaulted),
        "clamped": list(st.clamped),
    }, indent=2))


@main.command("train-toy")
@click.option("--hand", "hand_path", required=True, type=click.Path(exists=True))
@click.option("--out-dir", "out_dir", required=True, type=click.Path())
@click.option("--samples", default=256, show_default=True, type=int)
@click.option("--horizon", default=4, show_default=True, type=int)
@click.option("--epochs", default=60, show_default=True, type=int)
@click.option("--lr", default=3e-3, show_default=True, type=float)
@click.option("--hidden", default="", help="comma-separated layer widths "
              "(default: two layers as wide as the action chunk)")
@click.option("--seed", default=0, show_default=True, type=int)
def train_toy(hand_path, out_dir, samples, horizon, epochs, lr, hidden, seed) -> None:
    """Train the flow-matching policy on the synthetic 2-d reaching task."""
    from .flowmatch import (
        PolicyNet,
        TrainConfig,
        fm_loss,
        sample_path,
        save_checkpoint,
        save_loss_curve,
        toy_reaching_dataset,
        train,
    )

    model = load_hand(hand_path)
    obs, chunks = toy_reaching_dataset(model, model.side, samples, horizon, seed)
    n_val = max(1, samples // 8)
    obs_train, chunks_train = obs[n_val:], chunks[n_val:]
    obs_val, chunks_val = obs[:n_val], chunks[:n_val]

    def val_loss(net) -> float:
        rng = np.random.default_rng(seed + 1)
        vals = [sample_path(chunks_val[i], rng.uniform(), rng) for i in range(n_val)]
        loss, _ = fm_loss(net, vals, obs_val)
        return loss

    # the velocity field is full rank in the chunk, so hidden layers narrower
    # than the action dimension cap how much noise the net can explain
    widths = tuple(int(w) for w in hidden.split(",") if w) or (
        max(64, chunks.shape[1]),
    ) * 2
    net = PolicyNet.create(d_action=chunks.shape[1], d_obs=obs.shape[1],
                           hidden=widths, seed=seed)
    initial = val_loss(net)
    report = train(net, obs_train, chunks_train,
                   TrainConfig(epochs=epochs, lr=lr, seed=seed))
    final = val_loss(net)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(net, out / "policy.ckpt", extra={"task": "toy-reaching", "seed": seed})
    save_loss_curve(report.loss_curve, out / "loss.csv")
    click.echo(f"val loss {initial:.4f} -> {final:.4f} "
               f"({final / initial:.1%} of initial) -> {out}")


@main.group()
def pointcloud() -> None:
    """RGB-D pointcloud pipeline steps."""


@pointcloud.command()
@click.option("--color", "color_path", required=True, type=click.Path(exists=True))
@click.option("--depth", "depth_path", required=True, type=click.Path(exists=True))
@click.option("--intrinsics", "intr_path", required=True, type=click.Path(exists=True))
@click.option("--mask", "mask_path", default=None, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
def unproject_cmd(color_path, depth_path, intr_path, mask_path, out_path) -> None:
    """RGB-D frame to a colored pointcloud (optionally masking hand pixels)."""
    frame = load_frame(color_path, depth_path, intr_path)
    mask = read_mask_pgm(mask_path) if mask_path else None
    cloud = unproject(frame, mask)
    Path(out_path).write_bytes(cloud.to_bytes())
    click.echo(f"{len(cloud)} points -> {out_path}")


@pointcloud.command()
@click.option("--cloud", "cloud_path", required=True, type=click.Path(exists=True))
@click.option("--intrinsics", "intr_path", required=True, type=click.Path(exists=True))
@click.option("--out-color", required=True, type=click.Path())
@click.option("--out-depth", required=True, type=click.Path())
def reproject_cmd(cloud_path, intr_path, out_color, out_depth) -> None:
    """Z-buffered pinhole projection of a cloud back to an RGB-D frame."""
    cloud = PointCloud.from_bytes(Path(cloud_path).read_bytes())
    frame = reproject(cloud, load_intrinsics(intr_path))
    write_ppm(out_color, frame.color)
    write_pgm16(out_depth, frame.depth)
    click.echo(f"{len(cloud)} points -> {out_color}, {out_depth}")


@pointcloud.command()
@click.option("--cloud", "cloud_path", required=True, type=click.Path(exists=True))
@click.option("--hand", "hand_path", required=True, type=click.Path(exists=True))
@click.option("--q", "q_text", required=True, help="comma-separated joint values")
@click.option("--offset-xyz", default="0,0,0", show_default=True)
@click.option("--offset-rpy", default="0,0,0", show_default=True)
@click.option("--density", default=20000.0, show_default=True, type=float)
@click.option("--out", "out_path", required=True, type=click.Path())
def attach(cloud_path, hand_path, q_text, offset_xyz, offset_rpy, density, out_path) -> None:
    """Attach robot-hand surface samples to a scene cloud (origin-tagged)."""
    scene = PointCloud.from_bytes(Path(cloud_path).read_bytes())
    model = load_hand(hand_path)
    offset = Pose.from_xyz_rpy(_floats(offset_xyz), _floats(offset_rpy))
    hand = sample_hand_surface(model, np.asarray(_floats(q_text)), offset=offset,
                               density=density)
    composed = compose_scene(scene, hand)
    Path(out_path).write_bytes(composed.to_bytes())
    click.echo(f"{len(scene)} scene + {len(hand)} hand -> {out_path}")


@main.group()
def dataset() -> None:
    """Trajectory shard tooling."""


@dataset.command()
@click.option("--hand", "hand_path", required=True, type=click.Path(exists=True))
@click.option("--recording", "recording_path", required=True, type=click.Path(exists=True))
@click.option("--profile", "profile_path", default=None, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--source", default="human", show_default=True,
              type=click.Choice(["human", "robot"]))
@click.option("--instruction", default="", show_default=True)
def pack(hand_path, recording_path, profile_path, out_dir, source, instruction) -> None:
    """Retarget a recording and write it as a trajectory shard."""
    from .dataset import trajectory_from_retarget, write_trajectory

    model = load_hand(hand_path)
    rec = load_recording(recording_path)
    offset = _offset_from_profile(profile_path)
    out = retarget_trajectory(
        model,
        [f.targets for f in rec.frames],
        [f.hand_pose for f in rec.frames],
        offset,
    )
    traj = trajectory_from_retarget(
        rec.name, model, out.results, [f.hand_pose for f in rec.frames],
        offset, clouds=[f.cloud for f in rec.frames], instruction=instruction,
        fps=rec.fps, source=source,
    )
    shard = write_trajectory(traj, out_dir)
    click.echo(f"packed {len(traj)} frames (convergence {out.convergence_rate:.0%}) -> {shard}")


@dataset.command()
@click.option("--shard", "shard_dir", required=True, type=click.Path(exists=True))
def stats(shard_dir) -> None:
    """Print a shard's trajectory summary."""
    from .dataset import read_trajectory

    traj = read_trajectory(shard_dir)
    n_clouds = sum(1 for f in traj.frames if f.cloud is not None)
    click.echo(json.dumps({
        "id": traj.id,
        "hand_id": traj.hand_id,
        "side": traj.side,
        "source": traj.source,
        "fps": traj.fps,
        "frames": len(traj),
        "clouds": n_clouds,
        "valid": traj.valid,
        "convergence_rate": traj.convergence_rate,
        "wrist_frame": traj.wrist_frame,
    }, indent=2))


@dataset.command("mix-preview")
@click.option("--human-count", default=20, show_default=True, type=int)
@click.option("--robot-count", default=10, show_default=True, type=int)
@click.option("--human-weight", default=1.0, show_default=True, type=float)
@click.option("--robot-weight", default=1.0, show_default=True, type=float)
@click.option("--batch-size", default=8, show_default=True, type=int)
@click.option("--batches", default=12, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
def mix_preview(human_count, robot_count, human_weight, robot_weight,
                batch_size, batches, seed) -> None:
    """Preview the co-training batch mix for given counts and weights."""
    from dataclasses import dataclass as _dc

    from .dataset import MixSpec, mix_batches

    @_dc
    class _Tag:
        source: str

    spec = MixSpec(human_count, robot_count, human_weight, robot_weight, seed)
    stream = mix_batches([_Tag("human")] * human_count, [_Tag("robot")] * robot_count,
                         spec, batch_size)
    for i in range(batches):
        batch = next(stream)
        h = sum(1 for item in batch if item.source == "human")
        click.echo(f"batch {i:3d}: {h} human / {len(batch) - h} robot")
    click.echo(f"epoch histograms: {stream.histograms}")


def entry() -> None:
    try:
        main(standalone_mode=True)
    except DexforgeError as exc:  # uniform domain-error reporting
        raise SystemExit(f"error: {exc}") from exc


if __name__ == "__main__":
    entry()
