import click

from cnnmap.commands.common import config_option, resolve_settings, single_sequence
from cnnmap.services.map_store import load_map
from cnnmap.services.reports import write_report, write_trajectory
from cnnmap.services.trainer import evaluate


@click.command("eval")
@click.option("--map", "map_path", required=True, help="Trained .cnnmap file.")
@click.option("--sequence", "sequence_path", required=True, help="Test sequence path.")
@click.option("--report", "report_path", type=click.Path(dir_okay=False), default=None,
              help="Per-frame error CSV.")
@click.option("--trajectory", "trajectory_path", type=click.Path(dir_okay=False), default=None,
              help="Ground-truth versus predicted positions CSV.")
@config_option
@click.pass_context
def eval_cmd(ctx, map_path, sequence_path, report_path, trajectory_path, config_path):
    """Relocalise every frame of a sequence and report the errors."""
    s = resolve_settings(ctx, config_path)
    sequence = single_sequence(sequence_path, s)
    report = evaluate(load_map(map_path), sequence)
    if report_path:
        write_report(report, report_path)
    if trajectory_path:
        write_trajectory(report, trajectory_path)
    click.echo(
        f"frames {report.frame_count}  "
        f"position {report.mean_pos_err_m:.4f} +/- {report.std_pos_err_m:.4f} m "
        f"(median {report.median_pos_err_m:.4f})  "
        f"angle {report.mean_ang_err_deg:.3f} +/- {report.std_ang_err_deg:.3f} deg "
        f"(median {report.median_ang_err_deg:.3f})"
    )
