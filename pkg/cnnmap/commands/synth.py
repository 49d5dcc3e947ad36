import logging

import click

from cnnmap.commands.common import choice_of, config_option, resolve_settings
from cnnmap.models import TrajectoryKind
from cnnmap.services.synth import default_trajectory_specs, generate_scene, generate_trajectory, write_dataset

logger = logging.getLogger(__name__)


@click.command("synth")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False), help="Scene directory to write.")
@click.option("--seed", type=int, default=None)
@click.option("--points", type=int, default=None, help="Number of scene points.")
@click.option("--extent", type=float, default=None, help="Scene cube diagonal in meters.")
@click.option("--trajectories", type=int, default=None, help="Number of sequences; the last one is the test split.")
@click.option("--frames", type=int, default=None, help="Frames per trajectory.")
@click.option("--radius", type=float, default=None, help="Camera orbit radius in meters.")
@click.option("--size", type=int, default=None, help="Rendered image side in pixels.")
@click.option("--kind", type=choice_of(TrajectoryKind), default=TrajectoryKind.CIRCLE.value, show_default=True)
@config_option
@click.pass_context
def synth(ctx, out_dir, seed, points, extent, trajectories, frames, radius, size, kind, config_path):
    """Render a synthetic scene into a 7-Scenes-layout dataset."""
    s = resolve_settings(
        ctx, config_path, seed=seed, synth_points=points, synth_extent=extent,
        synth_trajectories=trajectories, synth_frames=frames, synth_radius=radius, synth_size=size,
    )
    scene = generate_scene(s.seed, s.synth_points, s.synth_extent)
    specs = default_trajectory_specs(s.synth_trajectories, s.synth_frames, s.synth_radius, seed=s.seed)
    if kind != TrajectoryKind.CIRCLE.value:
        specs = [spec.model_copy(update={"kind": TrajectoryKind(kind)}) for spec in specs]
    poses = [generate_trajectory(spec) for spec in specs]
    write_dataset(scene, poses, s.synth_intrinsics, out_dir, s.synth_size)
    click.echo(f"Wrote {len(poses)} sequences x {s.synth_frames} frames to {out_dir}")
