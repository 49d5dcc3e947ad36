"""Procedural colored point scenes, camera trajectories and a z-buffered point-splat renderer.

Camera convention: +Z forward, +X right, +Y down; poses are camera-to-world.
"""

import logging
import math
from pathlib import Path

import numpy as np
from PIL import Image

from cnnmap.models import Intrinsics, Pose, Scene, TrajectoryKind, TrajectorySpec
from cnnmap.services.pose_geometry import make_pose, matrix_from_pose, matrix_from_quat, quat_from_matrix

logger = logging.getLogger(__name__)

SPLAT = ((0, 0), (0, 1), (1, 0), (1, 1))
MAX_DEPTH_MM = 65534


def generate_scene(seed: int, num_points: int, extent: float) -> Scene:
    """Uniform random colored points in a centered cube whose diagonal is `extent`."""
    if num_points < 1:
        raise ValueError(f"num_points must be >= 1, got {num_points}")
    rng = np.random.default_rng(seed)
    half = extent / (2.0 * math.sqrt(3.0))
    points = rng.uniform(-half, half, size=(num_points, 3))
    colors = rng.integers(0, 256, size=(num_points, 3), dtype=np.uint8)
    return Scene(points=points, colors=colors, seed=seed, extent=extent)


def look_at(position, target) -> np.ndarray:
    """Camera-to-world rotation whose optical axis (+Z) points from `position` to `target`."""
    position = np.asarray(position, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - position
    forward /= np.linalg.norm(forward)
    up = np.array([0.0, 0.0, 1.0])
    if abs(np.dot(forward, up)) > 1.0 - 1e-9:
        up = np.array([0.0, 1.0, 0.0])
    right = np.cross(forward, up)
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    return np.stack([right, down, forward], axis=1)


def _positions(spec: TrajectorySpec) -> np.ndarray:
    center = np.asarray(spec.center, dtype=np.float64)
    count = spec.frame_count
    if spec.kind == TrajectoryKind.RANDOM_WALK:
        rng = np.random.default_rng(spec.seed)
        p = center + np.array([spec.radius * math.cos(spec.phase), spec.radius * math.sin(spec.phase), spec.height])
        out = [p]
        for _ in range(count - 1):
            p = p + rng.normal(0.0, spec.step, size=3)
            offset = p - center
            dist = np.linalg.norm(offset)
            # keep the walk outside half the radius so the look-at stays defined
            if dist < 0.5 * spec.radius:
                p = center + offset / max(dist, 1e-12) * 0.5 * spec.radius
            out.append(p)
        return np.array(out)

    if spec.kind == TrajectoryKind.CIRCLE:
        theta = spec.phase + 2.0 * np.pi * np.arange(count) / count
    else:
        theta = spec.phase + spec.arc_span * np.arange(count) / max(count - 1, 1)
    offsets = np.stack([spec.radius * np.cos(theta), spec.radius * np.sin(theta), np.full(count, spec.height)], axis=1)
    return center + offsets


def generate_trajectory(spec: TrajectorySpec) -> list[Pose]:
    return [make_pose(p, quat_from_matrix(look_at(p, spec.center))) for p in _positions(spec)]


def default_trajectory_specs(count: int, frames: int, radius: float, seed: int = 0) -> list[TrajectorySpec]:
    """Circles at staggered heights and radii; the middle height is placed last for hold-out testing."""
    heights = np.linspace(-0.3, 0.3, count) if count > 1 else np.zeros(1)
    order = [j for j in range(count) if j != count // 2] + [count // 2] if count > 1 else [0]
    specs = []
    for i, j in enumerate(order):
        specs.append(TrajectorySpec(
            kind=TrajectoryKind.CIRCLE,
            radius=radius * (1.0 + 0.05 * (1 if j % 2 else -1)),
            frame_count=frames,
            seed=seed + i,
            height=float(heights[j]),
            phase=2.0 * np.pi * i / (frames * count),
        ))
    return specs


def render(scene: Scene, pose: Pose, K: Intrinsics, size: int) -> tuple[np.ndarray, np.ndarray]:
    """(size, size, 3) uint8 color and (size, size) depth in meters; background black with depth 0."""
    R = matrix_from_quat(pose.q)
    cam = (scene.points - np.asarray(pose.x)) @ R
    front = cam[:, 2] > 0
    cam, colors = cam[front], scene.colors[front]
    z = cam[:, 2]
    u0 = np.floor(K.fx * cam[:, 0] / z + K.cx).astype(np.int64)
    v0 = np.floor(K.fy * cam[:, 1] / z + K.cy).astype(np.int64)

    rows, cols, depths, idx = [], [], [], []
    for dv, du in SPLAT:
        v, u = v0 + dv, u0 + du
        inside = (v >= 0) & (v < size) & (u >= 0) & (u < size)
        rows.append(v[inside])
        cols.append(u[inside])
        depths.append(z[inside])
        idx.append(np.flatnonzero(inside))
    rows, cols, depths, idx = (np.concatenate(a) for a in (rows, cols, depths, idx))

    zbuf = np.full((size, size), np.inf)
    np.minimum.at(zbuf, (rows, cols), depths)
    win = depths == zbuf[rows, cols]

    rgb = np.zeros((size, size, 3), dtype=np.uint8)
    rgb[rows[win], cols[win]] = colors[idx[win]]
    depth = np.where(np.isfinite(zbuf), zbuf, 0.0).astype(np.float32)
    return rgb, depth


def depth_to_millimeters(depth: np.ndarray) -> np.ndarray:
    return np.clip(np.round(depth.astype(np.float64) * 1000.0), 0, MAX_DEPTH_MM).astype(np.uint16)


def write_dataset(
    scene: Scene,
    trajectories: list[list[Pose]],
    K: Intrinsics,
    directory: str | Path,
    size: int = 64,
) -> Path:
    """Render every trajectory into seq-NN folders of the 7-Scenes layout.

    The last trajectory is listed in TestSplit.txt, the rest in TrainSplit.txt.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for i, poses in enumerate(trajectories, start=1):
        seq_dir = directory / f"seq-{i:02d}"
        seq_dir.mkdir(exist_ok=True)
        for f, pose in enumerate(poses):
            rgb, depth = render(scene, pose, K, size)
            stem = seq_dir / f"frame-{f:06d}"
            Image.fromarray(rgb).save(f"{stem}.color.png")
            Image.fromarray(depth_to_millimeters(depth)).save(f"{stem}.depth.png")
            np.savetxt(f"{stem}.pose.txt", matrix_from_pose(pose), fmt="%.17g", delimiter="\t")
        logger.info("Rendered %s: %d frames", seq_dir.name, len(poses))

    count = len(trajectories)
    train = range(1, count) if count > 1 else range(1, 2)
    test = range(count, count + 1) if count > 1 else range(0)
    (directory / "TrainSplit.txt").write_text("".join(f"sequence{k}\n" for k in train))
    (directory / "TestSplit.txt").write_text("".join(f"sequence{k}\n" for k in test))
    (directory / "intrinsics.json").write_text(K.model_dump_json(indent=2))
    return directory
