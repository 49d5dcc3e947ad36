from pathlib import Path
from typing import Optional

import click

from cnnmap.config import Settings, load_settings
from cnnmap.models import DatasetKind, Sequence, TrainConfig
from cnnmap.services.datasets import load_scene_split, open_sequences
from cnnmap.services.run_logger import configure_logging

config_option = click.option(
    "--config", "config_path", type=click.Path(dir_okay=False), default=None,
    help="Flat key=value file; explicit flags win over it.",
)


def resolve_settings(ctx: click.Context, config_path: Optional[str], **overrides) -> Settings:
    """Layer defaults, env, --config and flags, configure logging and print the result."""
    root = ctx.find_root().obj or {}
    resolved = load_settings(config_path, **root, **overrides)
    configure_logging(resolved.log_level, resolved.log_json_path)
    click.echo("Resolved configuration:")
    for key, value in resolved.model_dump(mode="json").items():
        click.echo(f"  {key} = {value}")
    return resolved


def train_config(s: Settings) -> TrainConfig:
    return TrainConfig(
        epochs=s.epochs,
        batch_size=s.batch_size,
        learning_rate=s.learning_rate,
        momentum=s.momentum,
        beta=s.beta,
        seed=s.seed,
        deterministic=s.deterministic,
        shuffle=s.shuffle,
        val_fraction=s.val_fraction,
        workers=s.workers,
    )


def training_sequences(path: str, kind: DatasetKind, s: Settings) -> list[Sequence]:
    """Scene directories with a TrainSplit.txt train on that split; anything else on every sequence."""
    if kind in (DatasetKind.DIR, DatasetKind.AUTO) and (Path(path) / "TrainSplit.txt").is_file():
        train, _ = load_scene_split(path)
        return train
    return open_sequences(path, kind, s)


def single_sequence(path: str, s: Settings) -> Sequence:
    sequences = open_sequences(path, DatasetKind.AUTO, s)
    if len(sequences) != 1:
        raise click.BadParameter(f"{path} holds {len(sequences)} sequences, expected one")
    return sequences[0]


def choice_of(enum_cls) -> click.Choice:
    return click.Choice([e.value for e in enum_cls])
