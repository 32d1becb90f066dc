"""Command-line entry point: ``bindetect extract|train|evaluate|score``.

Exit codes: 0 success, 1 usage, 2 data error, 3 internal error.
"""
from __future__ import annotations

import logging
import sys
from datetime import date

import click
import yaml

from . import pipeline
from .evaluation import TIME_SPLIT_BOUNDARY, TIME_SPLIT_MIN
from .storage import FormatError

EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 1, 2, 3
DEFAULT_BASE_RATE = 0.5

log = logging.getLogger("bindetect")


def _load_config(ctx, param, value):
    if value is None:
        return None
    with open(value) as fh:
        cfg = yaml.safe_load(fh) or {}
    if not isinstance(cfg, dict):
        raise click.BadParameter("config file must hold a mapping of option names to values")
    cfg = {str(k).replace("-", "_"): v for k, v in cfg.items()}
    # same flat mapping for every subcommand; explicit flags still win
    ctx.default_map = {name: cfg for name in ("extract", "train", "evaluate", "score")}
    return value


def _parse_date(ctx, param, value):
    if value is None or isinstance(value, date):
        return value
    try:
        return date.fromisoformat(str(value))
    except ValueError:
        raise click.BadParameter(f"expected YYYY-MM-DD, got {value!r}") from None


def _parse_mask(ctx, param, value):
    try:
        return pipeline.parse_mask(value)
    except ValueError as exc:
        raise click.BadParameter(str(exc)) from None


def training_options(f):
    opts = [
        click.option("--seed", type=click.IntRange(min=0), default=0, show_default=True,
                     help="Single seed for splits, init, dropout and shuffling."),
        click.option("--mask", default="all", show_default=True, callback=_parse_mask,
                     help="Comma list of feature blocks: bytes,imports,metadata,strings."),
        click.option("--epochs", type=click.IntRange(min=1), default=200, show_default=True),
        click.option("--stop-error", "stop_train_error", type=float, default=0.02,
                     show_default=True, help="Stop once mean training loss drops below this."),
        click.option("--batch-size", type=click.IntRange(min=1), default=256, show_default=True),
        click.option("--keep-prob", type=click.FloatRange(0, 1, min_open=True), default=0.8,
                     show_default=True, help="Dropout keep probability."),
        click.option("--hidden", type=click.IntRange(min=1), default=1024, show_default=True,
                     help="Width of both hidden layers."),
        click.option("--lr", type=float, default=1e-3, show_default=True),
        click.option("--bandwidth", type=click.FloatRange(0, min_open=True), default=0.01,
                     show_default=True, help="KDE bandwidth for score calibration."),
    ]
    for opt in reversed(opts):
        f = opt(f)
    return f


def _train_config(kw) -> pipeline.TrainConfig:
    keys = ("seed", "mask", "epochs", "stop_train_error", "batch_size", "keep_prob",
            "hidden", "lr", "bandwidth")
    return pipeline.TrainConfig(**{k: kw[k] for k in keys})


@click.group()
@click.option("--config", type=click.Path(exists=True, dir_okay=False), callback=_load_config,
              is_eager=True, expose_value=False, help="YAML/JSON file of option defaults.")
@click.option("-v", "--verbose", count=True)
def cli(verbose):
    """Static PE malware detection: features, training, calibration, evaluation."""
    logging.basicConfig(level=logging.WARNING - 10 * min(verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")


@cli.command()
@click.argument("inputs", nargs=-1, required=True)
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False),
              help="Feature matrix file; the sidecar is written next to it.")
@click.option("--votes", type=click.Path(exists=True, dir_okay=False),
              help="CSV with file_id,alarms,engines,compile_timestamp.")
@click.option("--workers", type=click.IntRange(min=1), default=1, show_default=True)
def extract(inputs, output, votes, workers):
    """Extract 1024-dim feature vectors from files, directories or globs."""
    n = pipeline.extract(inputs, output, votes, workers)
    click.echo(f"{n} rows -> {output}")


@cli.command()
@click.argument("matrix", type=click.Path(exists=True, dir_okay=False))
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False))
@click.option("--labels", type=click.Path(exists=True, dir_okay=False),
              help="Sidecar TSV (default: MATRIX.tsv).")
@click.option("--calibration-fraction", type=click.FloatRange(0, 1, max_open=True),
              default=0.25, show_default=True,
              help="Share of each class held out to fit the score calibration.")
@training_options
def train(matrix, output, labels, calibration_fraction, **kw):
    """Train the classifier and its calibration; write a model file."""
    cfg = _train_config(kw)
    cfg.calibration_fraction = calibration_fraction
    meta = pipeline.train(matrix, output, cfg, labels)
    click.echo(f"trained {meta['epochs_run']} epochs, final loss {meta['final_loss']:.6f} -> {output}")


@cli.command()
@click.argument("matrix", type=click.Path(exists=True, dir_okay=False))
@click.option("-o", "--output", required=True, type=click.Path(file_okay=False),
              help="Directory for ROC CSVs and the summary.")
@click.option("--labels", type=click.Path(exists=True, dir_okay=False))
@click.option("--mode", type=click.Choice(["kfold", "timesplit"]), default="kfold", show_default=True)
@click.option("--folds", type=click.IntRange(min=2), default=4, show_default=True)
@click.option("--split-date", callback=_parse_date, default=TIME_SPLIT_BOUNDARY.isoformat(),
              show_default=True, help="Train before this date, test on or after it.")
@click.option("--min-date", callback=_parse_date, default=TIME_SPLIT_MIN.isoformat(),
              show_default=True)
@click.option("--max-date", callback=_parse_date, default=None,
              help="Drop timestamps after this date [default: today]")
@training_options
def evaluate(matrix, output, labels, mode, folds, split_date, min_date, max_date, **kw):
    """Cross-validated or time-split ROC evaluation."""
    summary = pipeline.evaluate(matrix, output, _train_config(kw), mode=mode, folds=folds,
                                split_date=split_date, min_date=min_date, max_date=max_date,
                                labels_path=labels)
    click.echo(f"auc={summary['auc']:.6f} tpr_at_0.001={summary['tpr_at_0.001']:.4f}")


@cli.command()
@click.argument("model", type=click.Path(exists=True, dir_okay=False))
@click.argument("files", nargs=-1, required=True)
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False))
@click.option("--base-rate", type=click.FloatRange(0, 1, min_open=True, max_open=True),
              default=None, help="Assumed fraction of malware on the network.")
def score(model, files, output, base_rate):
    """Raw classifier score and calibrated threat score per file."""
    if base_rate is None:
        click.echo(f"warning: --base-rate not given; assuming {DEFAULT_BASE_RATE}", err=True)
        base_rate = DEFAULT_BASE_RATE
    results = pipeline.score(model, files, base_rate, output)
    click.echo(f"{len(results)} files scored -> {output}")


def main(argv=None) -> int:
    try:
        cli.main(args=argv, prog_name="bindetect", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.Abort:
        click.echo("aborted", err=True)
        return EXIT_USAGE
    except click.ClickException as exc:
        exc.show()
        return EXIT_USAGE
    except (pipeline.DataError, FormatError) as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        log.debug("internal error", exc_info=True)
        click.echo(f"internal error: {type(exc).__name__}: {exc}", err=True)
        return EXIT_INTERNAL
    return 0


if __name__ == "__main__":
    sys.exit(main())
