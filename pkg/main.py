import logging
import sys

import click
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

from backend.config import load_config
from backend.runner import run
from utils.errors import ConfigError, FlockError

console = Console(stderr=True)


def _configure_logging(verbose: int):
    level = logging.WARNING if verbose == 0 else logging.INFO if verbose == 1 else logging.DEBUG
    logging.basicConfig(
        level=level,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=console, show_path=False)],
        force=True,
    )


def _parse_numbers(text: str, cast=float) -> list:
    try:
        return [cast(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise click.BadParameter(f"expected a comma-separated list of numbers, got {text!r}") from None


def _parse_sweep(text: str) -> dict:
    """`beta=0.1,0.25,0.4` -> sweep block override."""
    name, sep, values = text.partition("=")
    name = name.strip().lower()
    if not sep or name not in ("beta", "speed"):
        raise click.BadParameter(f"expected beta=<list> or speed=<list>, got {text!r}")
    key = "betas" if name == "beta" else "speeds"
    return {"kind": name, key: _parse_numbers(values)}


def _print_outcome(outcome):
    table = Table(title=f"{outcome.experiment} (exit {outcome.exit_status})", show_header=True)
    table.add_column("artifact")
    table.add_column("path")
    for name, path in outcome.artifacts.items():
        table.add_row(name, str(path))
    console.print(table)


def _run_or_exit(config_path: str, experiment: str, overrides: dict) -> int:
    """Load, run and map every library error to its exit status."""
    overrides = {"experiment": experiment, **overrides}
    try:
        config = load_config(config_path, overrides)
        outcome = run(config)
    except ConfigError as exc:
        logging.error("Invalid run file %s", exc.path or config_path)
        for violation in exc.violations:
            console.print(f"  [red]-[/red] {violation}")
        return exc.exit_status
    except FlockError as exc:
        logging.error("%s failed (%s): %s", experiment, exc.code, exc)
        return exc.exit_status
    _print_outcome(outcome)
    return outcome.exit_status


def _common_overrides(out_dir, plots) -> dict:
    overrides = {}
    output = {}
    if out_dir:
        output["dir"] = out_dir
    if plots:
        output["plots"] = True
    if output:
        overrides["output"] = output
    return overrides


config_option = click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False),
                             help="YAML run file")
out_dir_option = click.option("--out-dir", default=None, type=click.Path(file_okay=False),
                              help="Output directory (overrides output.dir)")
plots_option = click.option("--plots", is_flag=True, help="Also write a static HTML report")


@click.group()
@click.option("-v", "--verbose", count=True, help="-v for progress, -vv for debug output")
def cli(verbose):
    """Finite-speed Cucker-Smale flocking: simulation, certificates and mean-field studies."""
    _configure_logging(verbose)


@cli.command()
@config_option
@out_dir_option
@plots_option
def simulate(config_path, out_dir, plots):
    """Integrate the configured flock and write diagnostics and trajectories."""
    sys.exit(_run_or_exit(config_path, "simulate", _common_overrides(out_dir, plots)))


@cli.command()
@config_option
@out_dir_option
@click.option("--sweep", "sweep", default=None, help="beta=<list>: feasibility table over kernel exponents instead")
def certify(config_path, out_dir, sweep):
    """Compute a flocking certificate (critical speed c*) for the initial data."""
    overrides = _common_overrides(out_dir, False)
    if sweep:
        block = _parse_sweep(sweep)
        if block["kind"] != "beta":
            raise click.BadParameter("certify only sweeps beta", param_hint="--sweep")
        sys.exit(_run_or_exit(config_path, "sweep", {**overrides, "sweep": block}))
    sys.exit(_run_or_exit(config_path, "certify", overrides))


@cli.command(name="flock-run")
@config_option
@out_dir_option
@plots_option
def flock_run(config_path, out_dir, plots):
    """Certify, simulate at c* and check the exponential decay envelopes."""
    sys.exit(_run_or_exit(config_path, "flock-run", _common_overrides(out_dir, plots)))


@cli.command()
@config_option
@out_dir_option
@plots_option
@click.option("--n-list", default=None, help="Comma-separated particle counts, e.g. 4,8,16,32")
@click.option("--workers", type=int, default=None, help="Worker processes (overrides the run file)")
def meanfield(config_path, out_dir, plots, n_list, workers):
    """Particle-count convergence and perturbation studies in transport distance."""
    overrides = _common_overrides(out_dir, plots)
    if n_list:
        overrides["meanfield"] = {"n_list": _parse_numbers(n_list, int)}
    if workers is not None:
        overrides["workers"] = workers
    sys.exit(_run_or_exit(config_path, "meanfield", overrides))


@cli.command()
@config_option
@out_dir_option
@plots_option
@click.option("--kind", type=click.Choice(["beta", "speed", "order"]), default=None, help="Overrides sweep.kind")
@click.option("--sweep", "sweep", default=None, help="beta=<list> or speed=<list>")
def sweep(config_path, out_dir, plots, kind, sweep):
    """Consistency sweeps: certificate feasibility over beta, c towards infinity, step-size order."""
    overrides = _common_overrides(out_dir, plots)
    block = _parse_sweep(sweep) if sweep else {}
    if kind:
        block["kind"] = kind
    if block:
        overrides["sweep"] = block
    sys.exit(_run_or_exit(config_path, "sweep", overrides))


if __name__ == "__main__":
    cli()
