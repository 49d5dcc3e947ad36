from pathlib import Path

import click

from cnnmap.commands.common import (
    choice_of,
    config_option,
    resolve_settings,
    single_sequence,
    train_config,
    training_sequences,
)
from cnnmap.errors import ConfigError
from cnnmap.models import CnnfScale, DatasetKind, InitScheme, InputKind, InputSpec
from cnnmap.services.cnnf import build_cnnf, init_weights, param_count
from cnnmap.services.map_store import load_map, save_map
from cnnmap.services.trainer import train


@click.command("train")
@click.option("--data", "data_path", required=True, help="Dataset path (sequence folder, manifest or scene dir).")
@click.option("--dataset", "dataset_kind", type=choice_of(DatasetKind), default=DatasetKind.AUTO.value,
              show_default=True)
@click.option("--input", "input_kind", type=choice_of(InputKind), default=None)
@click.option("--scale", type=choice_of(CnnfScale), default=None)
@click.option("--epochs", type=int, default=None)
@click.option("--beta", type=float, default=None)
@click.option("--lr", type=float, default=None)
@click.option("--momentum", type=float, default=None)
@click.option("--batch-size", type=int, default=None)
@click.option("--keep-prob", type=float, default=None, help="Dropout keep probability after full6/full7.")
@click.option("--seed", type=int, default=None)
@click.option("--deterministic/--no-deterministic", default=None)
@click.option("--workers", type=int, default=None)
@click.option("--init", "init_scheme", type=click.Choice(["he", "gaussian"]), default=None)
@click.option("--init-map", type=click.Path(dir_okay=False), default=None,
              help="Start from the weights of an existing map.")
@click.option("--val-seq", type=str, default=None, help="Validation sequence; default holds out the last frames.")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--log", "log_path", type=click.Path(dir_okay=False), default=None, help="Learning log CSV.")
@config_option
@click.pass_context
def train_cmd(ctx, data_path, dataset_kind, input_kind, scale, epochs, beta, lr, momentum, batch_size, keep_prob,
              seed, deterministic, workers, init_scheme, init_map, val_seq, out_path, log_path, config_path):
    """Train a map on one or more sequences and save it."""
    s = resolve_settings(
        ctx, config_path, input_kind=input_kind, scale=scale, epochs=epochs, beta=beta, learning_rate=lr,
        momentum=momentum, batch_size=batch_size, keep_prob=keep_prob, seed=seed, deterministic=deterministic,
        workers=workers, init_scheme=init_scheme,
    )
    sequences = training_sequences(data_path, DatasetKind(dataset_kind), s)
    validation = single_sequence(val_seq, s) if val_seq else None

    model = build_cnnf(InputSpec(kind=s.input_kind), s.scale, keep_prob=s.keep_prob)
    if init_map:
        model = init_weights(model, InitScheme.FROM_BLOB, blob=load_map(init_map))
    elif s.init_scheme == InitScheme.FROM_BLOB:
        raise ConfigError("init_scheme from_blob needs --init-map")
    else:
        model = init_weights(model, s.init_scheme, seed=s.seed, sigma=s.init_sigma)
    model.meta.dataset_tag = Path(data_path).name

    trained, history = train(model, sequences, validation, train_config(s))
    size = save_map(trained, out_path)
    if log_path:
        history.export_csv(log_path)
    last = history.latest()
    click.echo(f"Saved {out_path}: {param_count(trained)} parameters, {size} bytes; "
               f"final train_loss {last.train_loss:.6g}")
