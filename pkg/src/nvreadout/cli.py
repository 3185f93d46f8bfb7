"""
Command-line front end.

Exit codes: 0 on success, 2 for configuration or input problems (the message
names the offending field), 3 for numerical failures in fits, calibration
or propagation.
"""

from __future__ import annotations

import functools
import logging
import sys
from pathlib import Path

import click

from . import analysis as an
from .config import (
    ConfigError,
    ScenarioConfig,
    dump_config,
    load_config,
    load_preset,
    overlay_parameters,
    with_overrides,
)
from .experiments import run_calibration, run_scenario, run_sweep
from .physics import DegenerateRates
from .svgplot import KINDS as PLOT_KINDS, plot_csv
from .tables import SchemaMismatch, write_shots, write_table

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
NUMERICAL_ERRORS = (an.FitDiverged, an.NoBracket, an.Unreachable, DegenerateRates, FloatingPointError)


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _guarded(fn):
    """Map library exceptions onto the documented exit codes."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (ConfigError, SchemaMismatch) as exc:
            _fail(EXIT_CONFIG, str(exc))
        except an.NoBracket as exc:
            _fail(EXIT_NUMERICAL, f"{exc}. Widen the bracket or check that the target is physical.")
        except an.Unreachable as exc:
            _fail(EXIT_NUMERICAL, f"{exc}. Lower the target fidelity or raise alpha0.")
        except NUMERICAL_ERRORS as exc:
            _fail(EXIT_NUMERICAL, f"{type(exc).__name__}: {exc}")

    return wrapper


def _load(config, preset) -> ScenarioConfig:
    if config and preset:
        raise click.UsageError("give either CONFIG or --preset, not both")
    if preset:
        return load_preset(preset)
    if not config:
        raise click.UsageError("a CONFIG file or --preset is required")
    return load_config(config)


def _apply_flags(cfg: ScenarioConfig, seed, shots, backend, out_dir, params) -> ScenarioConfig:
    if params:
        cfg = overlay_parameters(cfg, load_config(params))
    sim = {}
    if seed is not None:
        sim["seed"] = seed
    if shots is not None:
        sim["n_shots"] = shots
    if backend is not None:
        sim["backend"] = backend
    if sim:
        cfg = with_overrides(cfg, simulation=sim)
    if out_dir is not None:
        cfg = with_overrides(cfg, output={"dir": str(out_dir)})
    return cfg


def common_options(fn):
    options = [
        click.argument("config", required=False, type=click.Path(dir_okay=False)),
        click.option("--preset", help="Use a bundled scenario instead of a file."),
        click.option("--seed", type=int, help="Override simulation.seed."),
        click.option("--shots", type=int, help="Override simulation.n_shots."),
        click.option("--backend", type=click.Choice(["expectation", "montecarlo"]), help="Override simulation.backend."),
        click.option("--out-dir", type=click.Path(file_okay=False), help="Override output.dir."),
        click.option("--params", type=click.Path(dir_okay=False, exists=True),
                     help="Parameter file from `calibrate`; replaces physics, readout and gates."),
    ]
    for opt in reversed(options):
        fn = opt(fn)
    return fn


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def main(verbose):
    """Repetitive and error-corrected NV readout simulator."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(message)s")


@main.command()
@common_options
@_guarded
def run(config, preset, seed, shots, backend, out_dir, params):
    """Simulate one scenario for both electron preparations."""
    cfg = _apply_flags(_load(config, preset), seed, shots, backend, out_dir, params)
    result = run_scenario(cfg)
    out = Path(cfg.output.dir)
    stem = cfg.output.prefix
    trace = write_table(out / f"{stem}_trace.csv", "trace", result.trace_rows)
    write_table(out / f"{stem}_summary.csv", "summary", result.summary_rows)
    plot_csv(trace, "fidelity_curve", out / f"{stem}_fidelity.svg")
    if cfg.output.shots and cfg.simulation.backend == "montecarlo":
        for r in result.variants:
            write_shots(out / f"{stem}_{r.name}_shots.csv", r.shots)
    for row in result.summary_rows:
        imp = row["improvement"]
        click.echo(
            f"{row['variant']:>5}  F_max={row['F_max']:.4f}  N_opt={row['N_opt']}  "
            f"N_1e={row['N_1e']:.0f}  duration={row['duration_us'] / 1000:.3f} ms"
            + (f"  improvement={imp:.3f}" if imp is not None else "")
        )
    click.echo(f"wrote {out}/{stem}_*")


@main.command()
@common_options
@_guarded
def sweep(config, preset, seed, shots, backend, out_dir, params):
    """Repeat a scenario over the values of its [sweep] section."""
    cfg = _apply_flags(_load(config, preset), seed, shots, backend, out_dir, params)
    if cfg.sweep is None:
        raise ConfigError("sweep: section missing")
    rows = run_sweep(cfg)
    out = Path(cfg.output.dir)
    path = write_table(out / f"{cfg.output.prefix}_sweep.csv", "sweep", rows)
    kind = {"B0": "field_sweep", "N_r": "nr_sweep"}.get(cfg.sweep.axis)
    if kind:
        plot_csv(path, kind, out / f"{cfg.output.prefix}_{kind}.svg")
    for row in rows:
        if row["variant"] == "ec":
            click.echo(f"{row['axis']}={row['value']:<8g} N_r={row['N_r']:<3} F_max={row['F_max']:.4f} "
                       f"N_opt={row['N_opt']:<6} improvement={row['improvement']:.3f}")
    click.echo(f"wrote {path}")


@main.command()
@click.argument("targets", required=False, type=click.Path(dir_okay=False))
@click.option("--preset", help="Use a bundled targets file (e.g. 'targets').")
@click.option("--out-dir", type=click.Path(file_okay=False), help="Override output.dir.")
@click.option("-o", "--output", "output", type=click.Path(dir_okay=False),
              help="Parameter file to write (default: <out-dir>/<prefix>_params.toml).")
@_guarded
def calibrate(targets, preset, out_dir, output):
    """Fit contrast and kappa (and A_es if needed) to measured targets."""
    cfg = _load(targets, preset)
    if cfg.targets is None:
        raise ConfigError("targets: section missing")
    if out_dir is not None:
        cfg = with_overrides(cfg, output={"dir": str(out_dir)})
    report = run_calibration(cfg)
    out = Path(cfg.output.dir)
    params = Path(output) if output else out / f"{cfg.output.prefix}_params.toml"
    params.parent.mkdir(parents=True, exist_ok=True)
    params.write_text(dump_config(report.config))
    write_table(out / f"{cfg.output.prefix}_calibration.csv", "calibration", report.rows)
    for row in report.rows:
        click.echo(f"{row['step']:>8}  {row['parameter']} = {row['value']:.6g}  {row['note']}")
    if report.moderate_ok is False:
        click.echo("warning: moderate-field targets still missed after the joint fit", err=True)
    click.echo(f"wrote {params}")


@main.command()
@click.argument("csv_path", type=click.Path(dir_okay=False))
@click.option("--kind", required=True, type=click.Choice(sorted(PLOT_KINDS)))
@click.option("-o", "--output", type=click.Path(dir_okay=False), help="SVG path (default next to the CSV).")
@click.option("--title", default="", help="Optional plot title.")
@_guarded
def plot(csv_path, kind, output, title):
    """Render a CSV written by run or sweep as an SVG line plot."""
    path = plot_csv(csv_path, kind, output, title)
    click.echo(f"wrote {path}")


if __name__ == "__main__":
    main()
