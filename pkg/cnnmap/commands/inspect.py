from pathlib import Path

import click

from cnnmap.commands.common import config_option, resolve_settings
from cnnmap.services.cnnf import export_filters, layer_shapes, param_count
from cnnmap.services.map_store import load_map


def _shape(shape: tuple[int, ...]) -> str:
    return "x".join(str(d) for d in shape)


@click.command("inspect")
@click.option("--map", "map_path", required=True, help="Map file to describe.")
@click.option("--export-filters", "filters_path", type=click.Path(dir_okay=False), default=None,
              help="Write the first-layer filter grid as PNG.")
@click.option("--layers/--no-layers", default=False, help="List every layer with its shapes.")
@config_option
@click.pass_context
def inspect_cmd(ctx, map_path, filters_path, layers, config_path):
    """Describe a saved map."""
    resolve_settings(ctx, config_path)
    model = load_map(map_path)
    click.echo(f"architecture: {model.meta.architecture}")
    click.echo(f"input: {model.input_spec.kind.value} n={model.input_spec.n} size={model.input_size}")
    click.echo(f"epochs_trained: {model.meta.epochs_trained}")
    click.echo(f"dataset: {model.meta.dataset_tag or '-'}")
    click.echo(f"param_count: {param_count(model)}")
    click.echo(f"bytes: {Path(map_path).stat().st_size}")
    if layers:
        for label, in_shape, out_shape in layer_shapes(model):
            click.echo(f"  {label:<8} {_shape(in_shape):>12} -> {_shape(out_shape)}")
    if filters_path:
        export_filters(model, filters_path)
        click.echo(f"filters: {filters_path}")
