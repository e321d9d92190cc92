"""
Command-line surface of the lab

Every subcommand accepts --config, --seed, --out and --format plus any number of dotted
overrides such as `--model.t 0.25` or `--thresholds.xi_grid=[-2,0,2]`.
"""

import logging
from pathlib import Path
from typing import List, Optional

import typer
from pydantic import ValidationError
from rich.console import Console

from app.config import EXIT_ASSERTION_FAILURE, EXIT_CONFIG_ERROR, EXIT_PASS, setup_logging
from app.exceptions import ContourInfeasible, LabError
from app.models import OutputFormat
from app.services.experiment_service import get_experiment_service, load_config, parse_overrides

logger = logging.getLogger(__name__)

console = Console()
err_console = Console(stderr=True)

cli = typer.Typer(
    name="edge-lab",
    help="Last-passage percolation, generalized Wishart matrices and their edge kernels.",
    no_args_is_help=True,
    add_completion=False,
)

OVERRIDE_CONTEXT = {"allow_extra_args": True, "ignore_unknown_options": True}

COMMANDS = {
    "simulate-lpp": "Sample Y(N, p) for exponential waiting times.",
    "simulate-wishart": "Sample lambda_max of the generalized Wishart matrix X X*.",
    "check-thm1": "Two-sample KS test of Y(N, p) against lambda_max over several seeds.",
    "check-thm2": "Edge-scaled last-passage times against the two-parameter Airy determinant.",
    "check-thm4": "Conjugated finite kernel against its limit on a grid and at determinant level.",
    "compare-joint": "Per-level laws of the growth processes; joint statistics as diagnostics.",
    "kernel-eval": "Evaluate a kernel on a grid.",
    "gap-prob": "Fredholm gap probabilities of a kernel.",
    "tw-table": "Tracy-Widom table from the extended Airy kernel.",
}


def run_command(
    command: str,
    extra_args: List[str],
    config_path: Optional[Path] = None,
    seed: Optional[int] = None,
    out: Optional[Path] = None,
    fmt: Optional[OutputFormat] = None
) -> int:
    """Run one subcommand and return its process exit code"""
    try:
        overrides = parse_overrides(extra_args)
        config = load_config(
            str(config_path) if config_path else None,
            overrides,
            seed=seed,
            out=str(out) if out else None,
            fmt=fmt
        )
        report = get_experiment_service().run(command, config)
    except ContourInfeasible as e:
        logger.error(f"{command}: {e.message}", exc_info=True)
        err_console.print(f"[red]{e.message}[/red]\nviolated: {e.inequality}\nhint: {e.hint}")
        return e.exit_code
    except LabError as e:
        logger.error(f"{command}: {type(e).__name__}: {e.message}", exc_info=True)
        err_console.print(f"[red]{type(e).__name__}[/red]: {e.message}")
        return e.exit_code
    except ValidationError as e:
        logger.error(f"{command}: invalid configuration", exc_info=True)
        err_console.print(f"[red]invalid configuration[/red]\n{e}")
        return EXIT_CONFIG_ERROR

    console.print_json(
        data={
            "command": report.command,
            "passed": report.passed,
            "metrics": report.metrics,
            "artifacts": report.artifacts,
            "wall_clock_seconds": round(report.wall_clock_seconds, 3),
        },
        default=str,
    )
    return EXIT_ASSERTION_FAILURE if report.passed is False else EXIT_PASS


def _register(command: str, help_text: str):
    @cli.command(command, help=help_text, context_settings=OVERRIDE_CONTEXT)
    def handler(
        ctx: typer.Context,
        config: Optional[Path] = typer.Option(None, "--config", help="JSON experiment config"),
        seed: Optional[int] = typer.Option(None, "--seed", min=0, max=2 ** 64 - 1, help="Master seed (u64)"),
        out: Optional[Path] = typer.Option(None, "--out", help="Output directory"),
        fmt: Optional[OutputFormat] = typer.Option(None, "--format", help="Table format"),
    ):
        raise typer.Exit(code=run_command(command, list(ctx.args), config, seed, out, fmt))

    handler.__name__ = command.replace("-", "_")
    return handler


for _command, _help in COMMANDS.items():
    _register(_command, _help)


@cli.callback()
def main(
    log_level: Optional[str] = typer.Option(None, "--log-level", help="Overrides LOG_LEVEL"),
    plain_logs: bool = typer.Option(False, "--plain-logs", help="Human-readable logs instead of JSON"),
):
    setup_logging(level=log_level, json_logs=False if plain_logs else None)


if __name__ == "__main__":
    cli()
