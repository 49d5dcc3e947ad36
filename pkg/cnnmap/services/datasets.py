"""Sequence loaders (TUM RGB-D, 7-Scenes, CSV manifest) and n-channel input assembly."""

import csv
import logging
import re
from bisect import bisect_left
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image

from cnnmap.config import Settings, settings
from cnnmap.errors import DatasetLayoutError, DatasetParseError, InvalidPoseError, InvalidRotationError, MissingModalityError
from cnnmap.models import DatasetKind, Frame, InputKind, InputSpec, Intrinsics, Sequence
from cnnmap.services.pose_geometry import make_pose, pose_from_matrix

logger = logging.getLogger(__name__)

TUM_DEPTH_SCALE = 5000.0
SEVENSCENES_DEPTH_SCALE = 1000.0
SEVENSCENES_INVALID_DEPTH = 65535
MANIFEST_COLUMNS = ["image", "tx", "ty", "tz", "qw", "qx", "qy", "qz"]
LUMA = np.array([0.299, 0.587, 0.114], dtype=np.float32)

_SEVENSCENES_FILE = re.compile(r"^frame-(\d{6})\.(color\.png|depth\.png|pose\.txt)$")


def read_rgb(path: Path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"), dtype=np.uint8).copy()


def read_depth(path: Path, scale: float, invalid: Optional[int] = None) -> np.ndarray:
    """16-bit depth PNG to meters; 0 and `invalid` raw values become 0 (no measurement)."""
    with Image.open(path) as img:
        raw = np.asarray(img).astype(np.uint32)
    depth = raw.astype(np.float32) / np.float32(scale)
    if invalid is not None:
        depth[raw == invalid] = 0.0
    return depth


def associate(first: list[float], second: list[float], tolerance: float) -> dict[int, int]:
    """Greedy nearest-timestamp matching; each entry of either list is used at most once."""
    order = sorted(range(len(second)), key=lambda j: second[j])
    stamps = [second[j] for j in order]
    candidates = []
    for i, t in enumerate(first):
        lo = bisect_left(stamps, t - tolerance)
        for k in range(lo, len(stamps)):
            if stamps[k] > t + tolerance:
                break
            candidates.append((abs(stamps[k] - t), i, order[k]))
    candidates.sort()
    matches: dict[int, int] = {}
    used: set[int] = set()
    for _, i, j in candidates:
        if i not in matches and j not in used:
            matches[i] = j
            used.add(j)
    return matches


def _stamped_images(folder: Path) -> list[tuple[float, Path]]:
    images = []
    for path in folder.glob("*.png"):
        try:
            images.append((float(path.stem), path))
        except ValueError:
            logger.warning("Skipping %s: file name is not a timestamp", path)
    return sorted(images)


def parse_tum_groundtruth(path: Path):
    """Lines "t tx ty tz qx qy qz qw" (scalar-last) to (timestamp, Pose) pairs."""
    entries = []
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            fields = line.split()
            if len(fields) != 8:
                raise DatasetParseError(f"expected 8 fields, found {len(fields)}", str(path), lineno)
            try:
                t, tx, ty, tz, qx, qy, qz, qw = (float(v) for v in fields)
                pose = make_pose((tx, ty, tz), (qw, qx, qy, qz))
            except (ValueError, InvalidPoseError) as e:
                raise DatasetParseError(f"malformed pose: {e}", str(path), lineno) from e
            entries.append((t, pose))
    return entries


def load_tum_sequence(
    directory: str | Path,
    assoc_tolerance: Optional[float] = None,
    intrinsics: Optional[Intrinsics] = None,
) -> Sequence:
    directory = Path(directory)
    tolerance = settings.assoc_tolerance if assoc_tolerance is None else assoc_tolerance
    gt_path = directory / "groundtruth.txt"
    if not gt_path.is_file():
        raise DatasetLayoutError(f"Missing groundtruth.txt in {directory}", hint="Expected the TUM RGB-D layout")
    if not (directory / "rgb").is_dir() and not (directory / "depth").is_dir():
        raise DatasetLayoutError(f"Neither rgb/ nor depth/ found in {directory}")

    groundtruth = parse_tum_groundtruth(gt_path)
    rgb = _stamped_images(directory / "rgb")
    depth = _stamped_images(directory / "depth")
    # frames are anchored on rgb when present, otherwise on depth
    anchor = rgb if rgb else depth

    depth_match = associate([t for t, _ in anchor], [t for t, _ in depth], tolerance) if rgb and depth else None
    gt_match = associate([t for t, _ in anchor], [t for t, _ in groundtruth], tolerance)

    frames = []
    for i, (t, path) in enumerate(anchor):
        if i not in gt_match or (depth_match is not None and i not in depth_match):
            continue
        color = read_rgb(path) if rgb else None
        if rgb and depth_match is not None:
            depth_map = read_depth(depth[depth_match[i]][1], TUM_DEPTH_SCALE)
        elif not rgb:
            depth_map = read_depth(path, TUM_DEPTH_SCALE)
        else:
            depth_map = None
        frames.append(Frame(rgb=color, depth=depth_map, pose=groundtruth[gt_match[i]][1], timestamp=t))

    dropped = len(anchor) - len(frames)
    if dropped:
        logger.info("TUM %s: dropped %d of %d frames without a match within %.3fs",
                    directory.name, dropped, len(anchor), tolerance)
    if not frames:
        raise DatasetLayoutError(f"No associated frames in {directory}",
                                 hint=f"Check timestamps or raise the association tolerance ({tolerance}s)")
    return Sequence(frames=frames, intrinsics=intrinsics or settings.tum_intrinsics, tag=directory.name)


def _read_pose_matrix(path: Path):
    rows = []
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                rows.append([float(v) for v in line.split()])
            except ValueError as e:
                raise DatasetParseError(f"non-numeric pose entry: {e}", str(path), lineno) from e
    matrix = np.array(rows, dtype=np.float64) if rows else np.zeros((0,))
    if matrix.shape != (4, 4):
        raise DatasetParseError(f"expected a 4x4 matrix, found shape {matrix.shape}", str(path))
    try:
        return pose_from_matrix(matrix)
    except InvalidRotationError as e:
        raise DatasetParseError(e.message, str(path)) from e


def load_7scenes_sequence(directory: str | Path, intrinsics: Optional[Intrinsics] = None) -> Sequence:
    directory = Path(directory)
    if not directory.is_dir():
        raise DatasetLayoutError(f"Sequence directory not found: {directory}")

    files: dict[int, dict[str, Path]] = {}
    for path in directory.iterdir():
        m = _SEVENSCENES_FILE.match(path.name)
        if m:
            files.setdefault(int(m.group(1)), {})[m.group(2)] = path
    if not files:
        raise DatasetLayoutError(f"No frame-NNNNNN files in {directory}", hint="Expected the 7-Scenes layout")

    frames = []
    for index in range(max(files) + 1):
        entry = files.get(index, {})
        for part in ("color.png", "pose.txt"):
            if part not in entry:
                raise DatasetLayoutError(f"Frame {index} in {directory} is missing frame-{index:06d}.{part}")
        depth = None
        if "depth.png" in entry:
            depth = read_depth(entry["depth.png"], SEVENSCENES_DEPTH_SCALE, invalid=SEVENSCENES_INVALID_DEPTH)
        frames.append(Frame(
            rgb=read_rgb(entry["color.png"]),
            depth=depth,
            pose=_read_pose_matrix(entry["pose.txt"]),
        ))
    return Sequence(frames=frames, intrinsics=intrinsics or settings.sevenscenes_intrinsics, tag=directory.name)


def load_manifest_sequence(csv_path: str | Path, intrinsics: Optional[Intrinsics] = None) -> Sequence:
    csv_path = Path(csv_path)
    if not csv_path.is_file():
        raise DatasetLayoutError(f"Manifest not found: {csv_path}")
    frames = []
    with open(csv_path, newline="") as f:
        reader = csv.reader(f)
        header = [h.strip() for h in next(reader, [])]
        if header != MANIFEST_COLUMNS:
            raise DatasetParseError(
                f"bad header {header}, expected columns {','.join(MANIFEST_COLUMNS)}", str(csv_path), 1
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(MANIFEST_COLUMNS):
                raise DatasetParseError(f"expected {len(MANIFEST_COLUMNS)} fields, found {len(row)}",
                                        str(csv_path), lineno)
            try:
                tx, ty, tz, qw, qx, qy, qz = (float(v) for v in row[1:])
                pose = make_pose((tx, ty, tz), (qw, qx, qy, qz))
            except (ValueError, InvalidPoseError) as e:
                raise DatasetParseError(f"malformed pose: {e}", str(csv_path), lineno) from e
            image_path = csv_path.parent / row[0].strip()
            if not image_path.is_file():
                raise DatasetLayoutError(f"Image not found: {image_path}", hint=f"Referenced at {csv_path}:{lineno}")
            frames.append(Frame(rgb=read_rgb(image_path), pose=pose))
    if not frames:
        raise DatasetLayoutError(f"Manifest {csv_path} lists no frames")
    return Sequence(frames=frames, intrinsics=intrinsics or settings.manifest_intrinsics, tag=csv_path.stem)


def _scene_intrinsics(root: Path) -> Optional[Intrinsics]:
    path = root / "intrinsics.json"
    if path.is_file():
        return Intrinsics.model_validate_json(path.read_text())
    return None


def scene_sequence_dirs(root: str | Path) -> list[Path]:
    root = Path(root)
    if not root.is_dir():
        raise DatasetLayoutError(f"Scene directory not found: {root}")
    dirs = sorted(p for p in root.iterdir() if p.is_dir() and p.name.startswith("seq-"))
    if not dirs:
        raise DatasetLayoutError(f"No seq-NN folders in {root}")
    return dirs


def load_scene_dir(root: str | Path) -> list[Sequence]:
    """Every seq-NN of a 7-Scenes-layout scene, ordered by name."""
    root = Path(root)
    intrinsics = _scene_intrinsics(root)
    return [load_7scenes_sequence(d, intrinsics) for d in scene_sequence_dirs(root)]


def read_split(path: Path) -> list[int]:
    numbers = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        m = re.fullmatch(r"sequence(\d+)", line)
        if not m:
            raise DatasetParseError(f"expected 'sequenceN', found '{line}'", str(path), lineno)
        numbers.append(int(m.group(1)))
    return numbers


def load_scene_split(root: str | Path) -> tuple[list[Sequence], list[Sequence]]:
    """(train, test) sequences listed in TrainSplit.txt / TestSplit.txt."""
    root = Path(root)
    intrinsics = _scene_intrinsics(root)
    splits = []
    for name in ("TrainSplit.txt", "TestSplit.txt"):
        path = root / name
        if not path.is_file():
            raise DatasetLayoutError(f"Missing {name} in {root}")
        splits.append([load_7scenes_sequence(root / f"seq-{k:02d}", intrinsics) for k in read_split(path)])
    return splits[0], splits[1]


def detect_kind(path: Path) -> DatasetKind:
    if path.is_file() and path.suffix.lower() == ".csv":
        return DatasetKind.MANIFEST
    if path.is_dir():
        if (path / "groundtruth.txt").is_file():
            return DatasetKind.TUM
        if any(_SEVENSCENES_FILE.match(p.name) for p in path.iterdir()):
            return DatasetKind.SEVENSCENES
        if any(p.is_dir() and p.name.startswith("seq-") for p in path.iterdir()):
            return DatasetKind.DIR
    raise DatasetLayoutError(f"Cannot open dataset at {path}: path missing or layout not recognised",
                             hint="Pass --dataset explicitly or check the path")


def open_sequences(
    path: str | Path,
    kind: DatasetKind = DatasetKind.AUTO,
    cfg: Optional[Settings] = None,
) -> list[Sequence]:
    """Load one dataset path; `cfg` supplies tolerance and intrinsics in place of the module settings."""
    cfg = cfg or settings
    path = Path(path)
    if not path.exists():
        raise DatasetLayoutError(f"Dataset path not found: {path}")
    kind = DatasetKind(kind)
    if kind == DatasetKind.AUTO:
        kind = detect_kind(path)
    if kind == DatasetKind.TUM:
        return [load_tum_sequence(path, cfg.assoc_tolerance, cfg.tum_intrinsics)]
    if kind == DatasetKind.SEVENSCENES:
        return [load_7scenes_sequence(path, _scene_intrinsics(path.parent) or cfg.sevenscenes_intrinsics)]
    if kind == DatasetKind.MANIFEST:
        return [load_manifest_sequence(path, cfg.manifest_intrinsics)]
    return load_scene_dir(path)


def backproject(depth: np.ndarray, K: Intrinsics) -> np.ndarray:
    """Organized (H, W, 3) camera-frame point map; zero depth maps to the origin."""
    h, w = depth.shape
    v, u = np.mgrid[0:h, 0:w]
    d = depth.astype(np.float64)
    points = np.stack([(u - K.cx) * d / K.fx, (v - K.cy) * d / K.fy, d], axis=-1)
    return points.astype(np.float32)


def _center_crop(stack: np.ndarray) -> np.ndarray:
    h, w = stack.shape[:2]
    side = min(h, w)
    top, left = (h - side) // 2, (w - side) // 2
    return stack[top:top + side, left:left + side]


def _resize_channel(channel: np.ndarray, size: int) -> np.ndarray:
    if channel.shape == (size, size):
        return channel
    img = Image.fromarray(np.ascontiguousarray(channel, dtype=np.float32))
    return np.asarray(img.resize((size, size), Image.Resampling.BILINEAR), dtype=np.float32)


def assemble_input(frame: Frame, spec: InputSpec, K: Intrinsics, out_size: int) -> np.ndarray:
    """Stack the channels of `spec`, center-crop to a square and resize to (n, out_size, out_size)."""
    if spec.needs_color and frame.rgb is None:
        raise MissingModalityError(f"Input '{spec.kind.value}' needs color data but the frame has none")
    if spec.needs_depth and frame.depth is None:
        raise MissingModalityError(f"Input '{spec.kind.value}' needs depth data but the frame has none")

    layers = []
    if spec.kind == InputKind.GRAY:
        layers.append((frame.rgb.astype(np.float32) @ LUMA)[..., None] / 255.0 - 0.5)
    if spec.kind in (InputKind.RGB, InputKind.RGBD, InputKind.RGBPC):
        layers.append(frame.rgb.astype(np.float32) / 255.0 - 0.5)
    if spec.kind in (InputKind.DEPTH, InputKind.RGBD):
        layers.append(frame.depth.astype(np.float32)[..., None])
    if spec.kind in (InputKind.POINTCLOUD, InputKind.RGBPC):
        # backprojected at native resolution so it stays pixel-aligned with color
        layers.append(backproject(frame.depth, K))

    stack = _center_crop(np.concatenate(layers, axis=2))
    out = np.stack([_resize_channel(stack[..., c], out_size) for c in range(stack.shape[2])])
    return out.astype(np.float32)


def check_modalities(sequences: list[Sequence], spec: InputSpec) -> None:
    for seq in sequences:
        for i, frame in enumerate(seq.frames):
            if spec.needs_color and frame.rgb is None:
                raise MissingModalityError(f"Sequence '{seq.tag}' frame {i} has no color data for input '{spec.kind.value}'")
            if spec.needs_depth and frame.depth is None:
                raise MissingModalityError(f"Sequence '{seq.tag}' frame {i} has no depth data for input '{spec.kind.value}'")


def assemble_batch(sequence: Sequence, spec: InputSpec, out_size: int) -> tuple[np.ndarray, np.ndarray]:
    """(N, n, S, S) inputs and (N, 7) pose targets with unit quaternions."""
    inputs = np.stack([assemble_input(f, spec, sequence.intrinsics, out_size) for f in sequence.frames])
    targets = np.stack([f.pose.vector() for f in sequence.frames])
    targets[:, 3:] /= np.linalg.norm(targets[:, 3:], axis=1, keepdims=True)
    return inputs, targets
