"""Command-line front end: ``python -m heavytail COMMAND``.

Exit codes: 0 success (and "accept" for ``test``), 2 rejection of H0 by
``test``, 1 for every error, usage errors included.
"""

import logging
import sys
from typing import Optional, Tuple

import click

from heavytail import __version__
from heavytail.config import get_settings
from heavytail.dist import (
    MAX_SEED,
    RngStream,
    Sample,
    domain_of_attraction,
    draw_sample,
    parse_distribution,
    read_sample,
    write_sample,
)
from heavytail.exceptions import HeavyTailError
from heavytail.hypotest import make_config, run_test
from heavytail.montecarlo import (
    DEFAULT_LEVEL,
    HypothesisLabel,
    export_standardized_histogram,
    load_experiment_spec,
    make_experiment_spec,
    make_histogram_cell,
    run_experiment,
    underlying_count,
    write_histogram_csv,
    write_report_csv,
)
from heavytail.statistic import build_bridge_path, build_walk_path, write_path_csv

logger = logging.getLogger(__name__)

DIST_HELP = (
    "Distribution as kind:param[:param...]: normal, gaussian-power:R, weak-dependent:R, "
    "alpha-stable:ALPHA[:BETA[:SCALE[:LOC]]], file:PATH."
)

_seed_type = click.IntRange(0, MAX_SEED)
_level_type = click.FloatRange(0, 1, min_open=True, max_open=True)


class HeavyTailGroup(click.Group):
    """Group that maps usage errors and library errors to exit code 1."""

    def main(self, args=None, prog_name=None, complete_var=None, standalone_mode=True, **extra):
        try:
            code = super().main(
                args=args, prog_name=prog_name, complete_var=complete_var, standalone_mode=False, **extra
            )
        except click.ClickException as e:
            e.show()
            code = 1 if isinstance(e, click.UsageError) else e.exit_code
        except click.Abort:
            click.echo("Aborted!", err=True)
            code = 1
        except (HeavyTailError, OSError) as e:
            logger.debug("command failed", exc_info=True)
            click.echo(f"Error: {e}", err=True)
            code = 1
        if not standalone_mode:
            return code
        sys.exit(code or 0)


def _seed_or_default(seed: Optional[int]) -> int:
    return get_settings().default_seed if seed is None else seed


def _check_blocks_fit(m: int, n: int) -> None:
    if m < n:
        raise click.BadParameter(f"m={m} is smaller than n={n}", param_hint="'--m' / '--n'")


@click.group(cls=HeavyTailGroup)
@click.version_option(__version__, prog_name="heavytail")
@click.option("--verbose", "-v", is_flag=True, help="Log at DEBUG level on stderr.")
def main(verbose: bool):
    """Test whether a sample's law has a finite second moment (H0: X in DA(2))."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


# -----------------------------
# TEST
# -----------------------------
@main.command("test")
@click.argument("file", type=click.Path(dir_okay=False))
@click.option("--n", "n", type=click.IntRange(min=2), required=True, help="Number of blocks.")
@click.option("--q", "q", type=_level_type, default=0.05, show_default=True, help="Significance level.")
@click.pass_context
def cmd_test(ctx: click.Context, file: str, n: int, q: float):
    """Run the test on a sample FILE (one real per line, # comments allowed).

    Prints a JSON record on stdout; exits 2 when H0 is rejected.
    """
    config = make_config(n, q)
    sample = read_sample(file)
    result = run_test(sample, config)
    click.echo(result.to_json())
    click.echo(result.conclusion, err=True)
    for message in result.warnings:
        click.echo(f"Warning: {message}", err=True)
    ctx.exit(2 if result.reject else 0)


# -----------------------------
# SIMULATE
# -----------------------------
@main.command("simulate")
@click.option("--dist", "dist_text", required=True, help=DIST_HELP)
@click.option("--m", "m", type=click.IntRange(min=1), required=True, help="Sample size.")
@click.option("--seed", type=_seed_type, default=None, help="Master seed (default: HEAVYTAIL_SEED).")
@click.option("--stream", type=_seed_type, default=0, show_default=True, help="Stream index.")
@click.option("--out", type=click.File("w", encoding="utf-8"), default="-", show_default=True)
def cmd_simulate(dist_text: str, m: int, seed: Optional[int], stream: int, out):
    """Write a seeded sample of m values."""
    distribution = parse_distribution(dist_text)
    rng_stream = RngStream(_seed_or_default(seed), stream)
    sample = draw_sample(distribution, rng_stream, underlying_count(distribution, m))
    write_sample(sample, out)


# -----------------------------
# EXPERIMENT
# -----------------------------
def _default_label(distribution) -> HypothesisLabel:
    alpha = domain_of_attraction(distribution)
    if alpha is None:
        return HypothesisLabel.UNKNOWN
    return HypothesisLabel.H0 if alpha >= 2.0 else HypothesisLabel.H1


@main.command("experiment")
@click.option("--spec-file", type=click.Path(dir_okay=False), help="JSON experiment spec.")
@click.option("--dist", "dist_text", help=DIST_HELP)
@click.option("--m", "m_values", type=click.IntRange(min=1), multiple=True, help="Sample size (repeatable).")
@click.option("--n", "n_values", type=click.IntRange(min=2), multiple=True, help="Block count (repeatable).")
@click.option("--q", "q_values", type=_level_type, multiple=True, help="Level (repeatable, default 0.05).")
@click.option("--scenarios", type=click.IntRange(min=1), help="Independent samples per m.")
@click.option("--seed", type=_seed_type, default=None, help="Master seed (default: HEAVYTAIL_SEED).")
@click.option("--hypothesis", type=click.Choice([label.value for label in HypothesisLabel]), default=None)
@click.option("--out", type=click.File("w", encoding="utf-8"), default="-", show_default=True)
@click.option("--workers", type=click.IntRange(min=1), default=1, show_default=True)
@click.option("--full-scale", is_flag=True, help="Allow m above the desk-scale limit.")
@click.option("--level", type=_level_type, default=DEFAULT_LEVEL, show_default=True, help="Wilson interval level.")
@click.option("--store", "store_url", default=None, help="SQLAlchemy URL to also store the run in.")
def cmd_experiment(
    spec_file: Optional[str],
    dist_text: Optional[str],
    m_values: Tuple[int, ...],
    n_values: Tuple[int, ...],
    q_values: Tuple[float, ...],
    scenarios: Optional[int],
    seed: Optional[int],
    hypothesis: Optional[str],
    out,
    workers: int,
    full_scale: bool,
    level: float,
    store_url: Optional[str],
):
    """Run a Monte Carlo grid and write its CSV report."""
    inline = dist_text is not None or m_values or n_values or q_values or scenarios is not None
    if spec_file and inline:
        raise click.UsageError("give either --spec-file or the inline grid flags, not both")

    if spec_file:
        spec = load_experiment_spec(spec_file)
    else:
        missing = [
            flag
            for flag, value in (("--dist", dist_text), ("--m", m_values), ("--n", n_values), ("--scenarios", scenarios))
            if not value
        ]
        if missing:
            raise click.UsageError(f"missing {', '.join(missing)} (or use --spec-file)")
        distribution = parse_distribution(dist_text)
        spec = make_experiment_spec(
            distribution=distribution,
            m_values=list(m_values),
            n_values=list(n_values),
            q_values=list(q_values) or [0.05],
            scenarios=scenarios,
            master_seed=_seed_or_default(seed),
            hypothesis_label=hypothesis or _default_label(distribution),
        )

    report = run_experiment(spec, workers=workers, full_scale=full_scale)
    write_report_csv(report, out, level)
    if store_url:
        from heavytail.store import save_report

        run_id = save_report(report, store_url, level)
        click.echo(f"stored as run {run_id}", err=True)


# -----------------------------
# PATH
# -----------------------------
@main.command("path")
@click.argument("file", required=False, type=click.Path(dir_okay=False))
@click.option("--dist", "dist_text", help=DIST_HELP)
@click.option("--m", "m", type=click.IntRange(min=1), help="Sample size when drawing with --dist.")
@click.option("--seed", type=_seed_type, default=None, help="Master seed (default: HEAVYTAIL_SEED).")
@click.option("--stream", type=_seed_type, default=0, show_default=True, help="Stream index.")
@click.option("--n", "n", type=click.IntRange(min=2), required=True, help="Number of grid steps.")
@click.option("--normalizer", type=float, default=None, help="Path normalizer (default sqrt(m)).")
@click.option("--walk-mean", type=float, default=None, help="Export the un-bridged walk centered at this mean.")
@click.option("--out", type=click.File("w", encoding="utf-8"), default="-", show_default=True)
def cmd_path(
    file: Optional[str],
    dist_text: Optional[str],
    m: Optional[int],
    seed: Optional[int],
    stream: int,
    n: int,
    normalizer: Optional[float],
    walk_mean: Optional[float],
    out,
):
    """Export the bridge path (t, z) of a sample FILE or of a drawn sample."""
    if (file is None) == (dist_text is None):
        raise click.UsageError("give either a sample FILE or --dist")

    if file is not None:
        sample = read_sample(file)
        _check_blocks_fit(len(sample), n)
    else:
        if m is None:
            raise click.UsageError("--dist needs --m")
        _check_blocks_fit(m, n)
        distribution = parse_distribution(dist_text)
        rng_stream = RngStream(_seed_or_default(seed), stream)
        sample = draw_sample(distribution, rng_stream, underlying_count(distribution, m))

    path = _path_of(sample, n, normalizer, walk_mean)
    write_path_csv(path, out)


def _path_of(sample: Sample, n: int, normalizer: Optional[float], walk_mean: Optional[float]):
    if walk_mean is None:
        return build_bridge_path(sample, n, normalizer)
    return build_walk_path(sample, n, walk_mean, normalizer)


# -----------------------------
# HISTOGRAM
# -----------------------------
@main.command("hist")
@click.option("--dist", "dist_text", required=True, help=DIST_HELP)
@click.option("--m", "m", type=click.IntRange(min=1), required=True)
@click.option("--n", "n", type=click.IntRange(min=2), required=True)
@click.option("--scenarios", type=click.IntRange(min=1), required=True)
@click.option("--seed", type=_seed_type, default=None, help="Master seed (default: HEAVYTAIL_SEED).")
@click.option("--bins", type=click.IntRange(min=1), default=40, show_default=True)
@click.option("--out", type=click.File("w", encoding="utf-8"), default="-", show_default=True)
@click.option("--workers", type=click.IntRange(min=1), default=1, show_default=True)
def cmd_hist(dist_text: str, m: int, n: int, scenarios: int, seed: Optional[int], bins: int, out, workers: int):
    """Histogram of the standardized statistic; the KS distance goes to stderr."""
    cell = make_histogram_cell(
        distribution=parse_distribution(dist_text),
        m=m,
        n=n,
        scenarios=scenarios,
        master_seed=_seed_or_default(seed),
    )
    histogram = export_standardized_histogram(cell, bins, workers=workers)
    write_histogram_csv(histogram, out)
    click.echo(f"ks_distance={histogram.ks_distance:.6f}", err=True)


# -----------------------------
# STORED RUNS
# -----------------------------
@main.command("runs")
@click.option("--store", "store_url", required=True, help="SQLAlchemy URL of the result store.")
@click.option("--run-id", type=click.IntRange(min=1), default=None, help="Re-export this run's CSV.")
@click.option("--out", type=click.File("w", encoding="utf-8"), default="-", show_default=True)
def cmd_runs(store_url: str, run_id: Optional[int], out):
    """List stored runs, or re-export one of them."""
    from heavytail.store import list_runs, load_run

    if run_id is not None:
        stored = load_run(store_url, run_id)
        write_report_csv(stored.report, out, stored.level)
        return

    for run in list_runs(store_url):
        label = f"{run.dist}:{run.param}" if run.param else run.dist
        out.write(
            f"{run.run_id}\t{run.created_at:%Y-%m-%d %H:%M:%S}\t{label}\t"
            f"seed={run.master_seed}\tscenarios={run.scenarios}\t{run.hypothesis}\tcells={run.cells}\n"
        )
