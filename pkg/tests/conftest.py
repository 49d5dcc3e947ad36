import os

import numpy as np
import pytest

from cnnmap.models import (
    Frame,
    InitScheme,
    InputKind,
    InputSpec,
    Intrinsics,
    Sequence,
    TrajectoryKind,
    TrajectorySpec,
)
from cnnmap.services.cnnf import build_cnnf, init_weights
from cnnmap.services.synth import default_trajectory_specs, generate_scene, generate_trajectory, render, write_dataset

SYNTH_K = Intrinsics(fx=70.0, fy=70.0, cx=32.0, cy=32.0)


def pytest_addoption(parser):
    parser.addoption("--run-slow", action="store_true", default=False, help="Run long calibration tests.")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--run-slow"):
        return
    skip = pytest.mark.skip(reason="needs --run-slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    for key in list(os.environ):
        if key.startswith("CNNMAP_"):
            monkeypatch.delenv(key)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def rgb_model():
    """Reduced-scale RGB model with He weights."""
    return init_weights(build_cnnf(InputSpec(kind=InputKind.RGB)), InitScheme.HE, seed=7)


def make_scene_dir(root, trajectories: int, frames: int, seed: int = 0):
    scene = generate_scene(seed, 3000, 3.0)
    specs = default_trajectory_specs(trajectories, frames, 2.0, seed=seed)
    write_dataset(scene, [generate_trajectory(s) for s in specs], SYNTH_K, root, 64)
    return root


@pytest.fixture(scope="session")
def scene_dir(tmp_path_factory):
    """Six short synthetic sequences; seq-06 is the test split."""
    return make_scene_dir(tmp_path_factory.mktemp("scene"), trajectories=6, frames=8)


def render_sequence(poses, tag: str = "synthetic", seed: int = 0) -> Sequence:
    scene = generate_scene(seed, 3000, 3.0)
    frames = []
    for pose in poses:
        rgb, depth = render(scene, pose, SYNTH_K, 64)
        frames.append(Frame(rgb=rgb, depth=depth, pose=pose))
    return Sequence(frames=frames, intrinsics=SYNTH_K, tag=tag)


@pytest.fixture(scope="session")
def arc_sequence():
    """Ten frames along a short arc, rendered in memory."""
    spec = TrajectorySpec(kind=TrajectoryKind.ARC, radius=2.0, frame_count=10, arc_span=0.5)
    return render_sequence(generate_trajectory(spec), tag="arc")
