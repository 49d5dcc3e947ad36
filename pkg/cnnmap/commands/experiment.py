import logging
from pathlib import Path
from typing import Optional

import click

from cnnmap.commands.common import choice_of, config_option, resolve_settings, train_config
from cnnmap.errors import DatasetLayoutError
from cnnmap.models import CnnfScale, InputKind, InputSpec, Sequence
from cnnmap.services.datasets import load_scene_dir, read_split
from cnnmap.services.experiment import compare_inputs, run_seeds
from cnnmap.services.reports import seed_path, write_comparison, write_series

logger = logging.getLogger(__name__)


def split_scene(scene_dir: str, test_seq: Optional[int]) -> tuple[list[Sequence], Sequence]:
    """Training sequences in seq-NN order and the held-out test sequence.

    Without --test-seq the first TestSplit.txt entry is used, else the last sequence.
    """
    sequences = load_scene_dir(scene_dir)
    if test_seq is not None:
        tag = f"seq-{test_seq:02d}"
    else:
        tag = sequences[-1].tag
        split = Path(scene_dir) / "TestSplit.txt"
        if split.is_file() and read_split(split):
            tag = f"seq-{read_split(split)[0]:02d}"
    test = [s for s in sequences if s.tag == tag]
    if not test:
        raise DatasetLayoutError(f"Test sequence {tag} not found in {scene_dir}")
    train = [s for s in sequences if s.tag != tag]
    if not train:
        raise DatasetLayoutError(f"No training sequences left in {scene_dir} after holding out {tag}")
    return train, test[0]


@click.command("experiment")
@click.option("--scene-dir", required=True, help="7-Scenes-layout scene with seq-NN folders.")
@click.option("--test-seq", type=int, default=None, help="Number N of the held-out seq-NN.")
@click.option("--epochs", type=int, default=None)
@click.option("--seed", type=int, default=None, help="First seed.")
@click.option("--seeds", type=click.IntRange(min=1), default=1, show_default=True, help="Number of seeds to run.")
@click.option("--input", "input_kind", type=choice_of(InputKind), default=None)
@click.option("--scale", type=choice_of(CnnfScale), default=None)
@click.option("--lr", type=float, default=None)
@click.option("--beta", type=float, default=None)
@click.option("--batch-size", type=int, default=None)
@click.option("--deterministic/--no-deterministic", default=None)
@click.option("--compare-inputs", "compare_kinds", default=None,
              help="Comma-separated input kinds to compare instead of the incremental series.")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@config_option
@click.pass_context
def experiment(ctx, scene_dir, test_seq, epochs, seed, seeds, input_kind, scale, lr, beta, batch_size,
               deterministic, compare_kinds, out_path, config_path):
    """Incremental-trajectory experiment (or an input-kind comparison) on a scene directory."""
    kinds = None
    if compare_kinds:
        try:
            kinds = [InputKind(k.strip()) for k in compare_kinds.split(",") if k.strip()]
        except ValueError as e:
            raise click.BadParameter(str(e), param_hint="--compare-inputs") from None

    s = resolve_settings(
        ctx, config_path, epochs=epochs, seed=seed, input_kind=input_kind, scale=scale, learning_rate=lr,
        beta=beta, batch_size=batch_size, deterministic=deterministic,
    )
    train_seqs, test = split_scene(scene_dir, test_seq)
    cfg = train_config(s)
    click.echo(f"Training sequences: {', '.join(t.tag for t in train_seqs)}; test: {test.tag}")

    if kinds:
        reports = compare_inputs(kinds, train_seqs, test, cfg, s.scale)
        write_comparison(reports, out_path)
        for kind, report in reports.items():
            click.echo(f"{kind.value:>10}  {report.mean_pos_err_m:.4f} +/- {report.std_pos_err_m:.4f} m")
        return

    results = run_seeds(train_seqs, test, cfg, seeds, InputSpec(kind=s.input_kind), s.scale)
    for series in results:
        path = out_path if seeds == 1 else seed_path(out_path, series.seed)
        write_series(series, path)
        for entry in series.entries:
            click.echo(f"seed {series.seed} k={entry.k}  {entry.report.mean_pos_err_m:.4f} m  "
                       f"params {entry.param_count}  bytes {entry.map_bytes}")
