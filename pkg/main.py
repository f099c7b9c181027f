import click

from data_types.errors import IdentificationError
from data_types.methods import TerminationReason
from parsers.experiment_parser import ExperimentConfigParser
from parsers.record_parser import RunRecordParser
from presentation.report_table import ReportTable
from utils.experiment_runner import ExperimentRunner
from utils.logger import Logger, configure_loggers

EXIT_NOT_CONVERGED = 3

logger = Logger(__name__)


class InputError(click.ClickException):
    """Rejected config, data file or record; exits with status 2."""

    exit_code = 2


def _guarded(action):
    try:
        return action()
    except (IdentificationError, OSError) as error:
        raise InputError(str(error)) from error


@click.group()
@click.option("--log-file", default=None, help="Also write log output to this file.")
@click.option("--verbose", is_flag=True, help="Log at DEBUG level.")
def main(log_file: str, verbose: bool):
    configure_loggers(log_file, verbose)


@main.command(name="simulate")
@click.option(
    "--config",
    "config_path",
    type=click.Path(),
    required=True,
    help="Experiment config (JSON) with method 'simulate' and a system block.",
)
@click.option(
    "--out",
    type=click.Path(),
    default=None,
    help="Output directory - Default: 'out' of the config, else the current directory.",
)
def simulate(config_path: str, out: str):
    """
    Simulates x_{t+1} = A x_t, y_t = C x_t and writes trajectory and observation CSVs.
    """
    config = _guarded(lambda: ExperimentConfigParser().parse_file(config_path))
    written = _guarded(lambda: ExperimentRunner(config).simulate(out))
    for path in written:
        click.echo(str(path))


@main.command(name="identify")
@click.option(
    "--config",
    "config_path",
    type=click.Path(),
    required=True,
    help="Experiment config (JSON).",
)
@click.option(
    "--out",
    type=click.Path(),
    default=None,
    help="Run record path - Default: 'out' of the config.",
)
@click.option("--seed", type=int, default=None, help="Overrides hyperparams.seed.")
@click.option("--jobs", type=int, default=1, show_default=True, help="Worker processes for sweeps.")
def identify(config_path: str, out: str, seed: int, jobs: int):
    """
    Runs the configured estimator and writes one run record per grid point.

    Exits with status 3 when an iterative method stops without converging
    (the record is still written).
    """
    overrides = {"seed": seed} if seed is not None else None
    config = _guarded(
        lambda: ExperimentConfigParser().parse_file(config_path, overrides=overrides)
    )
    written = _guarded(lambda: ExperimentRunner(config, jobs=jobs).run(out))
    for path, _ in written:
        click.echo(str(path))

    status = ExperimentRunner.status([record for _, record in written])
    if status is not TerminationReason.CONVERGED:
        logger.warning(f"run stopped without convergence: {status.value}")
        click.get_current_context().exit(EXIT_NOT_CONVERGED)


@main.command(name="report")
@click.argument("records", nargs=-1, type=click.Path())
@click.option(
    "--out",
    type=click.Path(),
    default=None,
    help="Table CSV path - Default: print to stdout.",
)
def report(records: tuple[str, ...], out: str):
    """
    Builds a CSV comparison table (method, gamma, mu, rho, error, iterations, residual, A) from run records.
    """
    loaded = _guarded(lambda: RunRecordParser().parse_files(list(records)))
    text = _guarded(lambda: ReportTable(loaded).write(out))
    if out is None:
        click.echo(text, nl=False)
    else:
        click.echo(out)


if __name__ == "__main__":
    main()
