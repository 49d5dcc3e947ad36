import sys
from typing import Optional

import click
from pydantic import ValidationError

from cnnmap.commands.evaluate import eval_cmd
from cnnmap.commands.experiment import experiment
from cnnmap.commands.inspect import inspect_cmd
from cnnmap.commands.synth import synth
from cnnmap.commands.train import train_cmd
from cnnmap.errors import CnnMapError, ConfigError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


@click.group()
@click.version_option("1.0.0", prog_name="cnnmap")
@click.option("--log-level", default=None, help="Logging level (default INFO).")
@click.option("--log-json", "log_json_path", default=None, help="Also write JSON-lines logs to this file.")
@click.pass_context
def cli(ctx, log_level, log_json_path):
    """Camera relocalisation maps: a fixed-size CNN regressing 6-DoF poses."""
    ctx.obj = {k: v for k, v in {"log_level": log_level, "log_json_path": log_json_path}.items() if v is not None}


cli.add_command(synth)
cli.add_command(train_cmd)
cli.add_command(eval_cmd)
cli.add_command(experiment)
cli.add_command(inspect_cmd)


def _report(message: str, hint: Optional[str] = None) -> None:
    click.echo(f"Error: {message}", err=True)
    if hint:
        click.echo(f"Hint: {hint}", err=True)


def run_command(argv: Optional[list[str]] = None) -> int:
    """Run one subcommand; 0 on success, 1 on usage or config errors, 2 on data or format errors."""
    try:
        result = cli.main(args=argv, prog_name="cnnmap", standalone_mode=False)
    except click.UsageError as e:
        e.show()
        return EXIT_USAGE
    except click.Abort:
        click.echo("Aborted!", err=True)
        return EXIT_USAGE
    except ConfigError as e:
        _report(e.message, e.hint)
        return EXIT_USAGE
    except CnnMapError as e:
        _report(e.message, e.hint)
        return EXIT_DATA
    except ValidationError as e:
        _report(str(e))
        return EXIT_DATA
    except OSError as e:
        _report(str(e))
        return EXIT_DATA
    except click.ClickException as e:
        e.show()
        return e.exit_code
    return result if isinstance(result, int) else EXIT_OK


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
