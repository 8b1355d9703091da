import functools
import json
from pathlib import Path

import click

from cohwit import health, logger
from cohwit.config import RunConfig
from cohwit.errors import CohwitError
from cohwit.logger import log
from cohwit.runner import (
    Cache,
    Runner,
    write_recommendation,
    write_spectrum,
    write_traces,
    write_witness,
)


def reports_errors(fn):
    """Turn toolkit errors into an error log line and the error's exit code."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except CohwitError as e:
            log.error(f"{type(e).__name__}: {e}")
            click.get_current_context().exit(e.exit_code)

    return wrapper


def run_options(fn):
    fn = click.option(
        "--seed",
        type=int,
        default=None,
        help="reserved; every computation is deterministic.",
    )(fn)
    fn = click.option(
        "--jobs",
        "-j",
        type=click.IntRange(min=1),
        default=1,
        show_default=True,
        help="the number of worker threads.",
    )(fn)
    fn = click.option(
        "--cache",
        type=click.Path(file_okay=False, path_type=Path),
        default=None,
        help="a directory of cached results to reuse and extend.",
    )(fn)
    fn = click.option(
        "--out",
        "-o",
        type=click.Path(file_okay=False, path_type=Path),
        default=None,
        help="the output directory, overriding the config.",
    )(fn)
    fn = click.argument(
        "CONFIG",
        type=click.Path(exists=True, dir_okay=False, readable=True, path_type=Path),
    )(fn)
    return fn


def engine_option(choices):
    return click.option(
        "--engine",
        type=click.Choice(choices),
        default="sos",
        show_default=True,
        help="grid propagation or the sum-over-states engine.",
    )


def _setup(config: Path, out: Path | None, cache: Path | None, jobs: int, seed: int | None):
    cfg = RunConfig.load(config)
    out = out or Path(cfg.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    if seed is not None:
        log.debug(f"ignoring seed {seed}, nothing is sampled at random")
    runner = Runner(cfg, Cache(cache) if cache else None, jobs)
    log.debug(f"loaded {config}, writing to {out}")
    return cfg, out, runner


@click.group()
@click.option(
    "-v",
    "--verbose",
    count=True,
    help="sets the verbosity of the program, more means more information",
)
def cli(verbose):
    """Pump-probe simulations and the pulse-duration coherence witness."""
    logger.initialize(verbose)


@cli.command()
@run_options
@reports_errors
def absorption(config, out, cache, jobs, seed):
    """Compute the absorption spectrum of CONFIG."""
    cfg, out, runner = _setup(config, out, cache, jobs, seed)
    payload = runner.absorption()
    write_spectrum(out, cfg, "absorption", payload)
    if payload["advisory"]:
        log.warning(payload["advisory"])
    click.echo(f"mean {payload['mean']:.6g}  variance {payload['variance']:.6g}")
    log.success(f"absorption spectrum written to {out}")


@cli.command()
@run_options
@reports_errors
def raman(config, out, cache, jobs, seed):
    """Compute the resonance Raman spectrum of CONFIG."""
    cfg, out, runner = _setup(config, out, cache, jobs, seed)
    payload = runner.raman()
    write_spectrum(out, cfg, "raman", payload)
    click.echo(f"mean {payload['mean']:.6g}")
    log.success(f"raman spectrum written to {out}")


@cli.command()
@run_options
@engine_option(["grid", "sos", "both"])
@reports_errors
def pumpprobe(config, out, cache, jobs, seed, engine):
    """Compute one pump-probe trace per pulse duration of CONFIG."""
    cfg, out, runner = _setup(config, out, cache, jobs, seed)
    engines = ["grid", "sos"] if engine == "both" else [engine]
    payloads = {e: runner.pumpprobe(e) for e in engines}
    deviation = write_traces(out, cfg, payloads)
    if deviation is not None:
        click.echo(f"max_rel_dev {deviation:.3e}")
    log.success(f"{sum(len(p['traces']) for p in payloads.values())} traces written to {out}")


@cli.command()
@run_options
@engine_option(["grid", "sos"])
@reports_errors
def witness(config, out, cache, jobs, seed, engine):
    """Compute the witness curve of CONFIG and classify its coherence."""
    cfg, out, runner = _setup(config, out, cache, jobs, seed)
    payload = runner.witness(engine)
    write_witness(out, cfg, payload, engine)
    write_recommendation(out, cfg, payload["recommendation"])

    if payload["witness_sigma"] is None:
        click.echo("T_W none")
    else:
        bound = " (lower bound, unbounded in sampled range)" if payload["unbounded"] else ""
        click.echo(f"T_W {payload['witness_sigma']:.6g} sigma, {payload['witness_fwhm']:.6g} fwhm{bound}")
        if payload["witness_fs"] is not None:
            click.echo(f"T_W {payload['witness_fs']:.4g} fs")
    click.echo(f"classification {payload['classification']}")
    click.echo(f"T_A {payload['recommendation']['sigma_max']:.6g}")
    log.success(f"witness curve written to {out}")


@cli.command()
@run_options
@engine_option(["grid", "sos"])
@reports_errors
def sweep(config, out, cache, jobs, seed, engine):
    """Run the witness pipeline over the sweep axis of CONFIG."""
    cfg, out, runner = _setup(config, out, cache, jobs, seed)
    table = runner.sweep(engine, out)
    if runner.cache is not None:
        log.info(f"cache: {runner.cache.hits} hits, {runner.cache.misses} misses")
    log.success(f"{len(table)} sweep points written to {out / 'sweep.csv'}")


@cli.command()
@run_options
@reports_errors
def recommend(config, out, cache, jobs, seed):
    """Recommend a center frequency and the longest admissible pulses for CONFIG."""
    cfg, out, runner = _setup(config, out, cache, jobs, seed)
    payload = runner.recommend()
    write_recommendation(out, cfg, payload)
    click.echo(json.dumps(payload, indent=2, sort_keys=True))
    if payload["advisory"]:
        log.warning(payload["advisory"])
    log.success(f"recommendation written to {out}")


@cli.command()
@click.option(
    "--fail-fast/--no-fail-fast",
    help="if we should stop after the first error.",
)
@click.pass_context
def checkhealth(ctx, fail_fast):
    """Run the numerical self-tests."""
    try:
        failures = health.checkhealth(fail_fast)
    except health.HealthFailure as e:
        log.error(str(e))
        ctx.exit(1)
    if failures:
        log.error(f"{len(failures)} checks failed")
        ctx.exit(1)
    log.success("all checks passed")


@cli.command()
@click.argument(
    "DIRECTORY",
    type=click.Path(exists=True, file_okay=False, readable=True, path_type=Path),
)
def plot(directory):
    """Render PNG figures from the CSV files in DIRECTORY."""
    from cohwit import plotting

    written = plotting.render_directory(directory)
    if not written:
        log.warning(f"no csv files to plot in {directory}")
    for path in written:
        log.info(f"wrote {path}")
    log.success(f"{len(written)} figures written")
