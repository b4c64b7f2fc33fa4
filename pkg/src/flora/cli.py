"""Command line: ``flora run`` and ``flora report``.

Every option can also be set through an environment variable named
``FLORA_<OPTION>`` (upper case, dashes as underscores), e.g.
``FLORA_DESIGN=n10``. Exit codes: 0 success, 1 configuration or input
error, 2 failure while running a stage.
"""

from __future__ import annotations

import logging
import sys
from pathlib import Path

import click

from flora.anneal import SaConfig
from flora.benchmarks import DESIGNS
from flora.pipeline import (ConfigError, RunConfig, StageFailure, format_table,
                            report_aggregate, run)

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _opt(*decls, **kw):
    name = kw.pop("env", None) or decls[0].lstrip("-").split("/")[0].replace("-", "_").upper()
    return click.option(*decls, envvar=f"FLORA_{name}", show_envvar=True, **kw)


def _stages(ctx, param, value):
    try:
        return tuple(int(v) for v in str(value).split(",") if v.strip())
    except ValueError:
        raise click.BadParameter("expected a comma list such as 1,2,3")


@click.group()
@click.option("-v", "--verbose", count=True, help="More logging (-v info, -vv debug).")
def cli(verbose):
    """Three-stage rectilinear floorplanner."""
    level = logging.WARNING - 10 * min(verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


@cli.command("run")
@_opt("--design", type=click.Choice(sorted(DESIGNS)), help="Bundled benchmark.")
@_opt("--blocks", type=click.Path(dir_okay=False, path_type=Path), help=".blocks file.")
@_opt("--nets", type=click.Path(dir_okay=False, path_type=Path), help=".nets file.")
@_opt("--pl", type=click.Path(dir_okay=False, path_type=Path), help="Terminal .pl file.")
@_opt("--grid", type=int, default=224, show_default=True, help="Canvas is GRID x GRID cells.")
@_opt("--util", type=float, default=0.7, show_default=True,
      help="Module area over canvas area before Stage 2.")
@_opt("--mode", type=click.Choice(["scratch", "post"]), default="scratch", show_default=True)
@_opt("--layout", type=click.Path(dir_okay=False, path_type=Path),
      help="Input layout snapshot (post mode).")
@_opt("--stages", callback=_stages, default="1,2,3", show_default=True)
@_opt("--seeds", type=int, default=1, show_default=True, help="Number of seeded runs.")
@_opt("--base-seed", type=int, default=0, show_default=True)
@_opt("--t-init", type=float, default=2000.0, show_default=True)
@_opt("--t-end", type=float, default=1e-3, show_default=True)
@_opt("--cooling", type=float, default=0.99, show_default=True)
@_opt("--w-mod", type=float, default=0.5, show_default=True, help="FTmod weight.")
@_opt("--w-pin", type=float, default=None, help="FTpin weight (default 1 - w-mod).")
@_opt("--steps-per-temp", type=int, default=None, help="Moves per temperature "
      "(default: module count).")
@_opt("--u", type=int, default=1, show_default=True, help="Minimum pin spacing in cells.")
@_opt("--fill-ratio", type=float, default=0.8, show_default=True,
      help="Component area over module area.")
@_opt("--allow-rotation/--no-rotation", default=True, show_default=True)
@_opt("--expand-cap", type=int, default=64, show_default=True,
      help="Children kept per tree-search expansion.")
@_opt("--out-dir", type=click.Path(file_okay=False, path_type=Path), default=Path("flora_out"),
      show_default=True)
def run_cmd(design, blocks, nets, pl, grid, util, mode, layout, stages, seeds, base_seed,
            t_init, t_end, cooling, w_mod, w_pin, steps_per_temp, u, fill_ratio,
            allow_rotation, expand_cap, out_dir):
    """Run the pipeline and write snapshots, SVGs and CSV reports."""
    if w_pin is None:
        w_pin = 1.0 - w_mod
    if seeds < 1:
        raise ConfigError("--seeds must be >= 1")
    try:
        sa = SaConfig(t_init=t_init, t_end=t_end, cooling=cooling,
                      steps_per_temp=steps_per_temp, weights=(w_mod, w_pin))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    cfg = RunConfig(design=design, blocks=blocks, nets=nets, pl=pl, grid=grid, util=util,
                    mode=mode, layout=layout, stages=stages,
                    seeds=tuple(range(base_seed, base_seed + seeds)), sa=sa, u=u,
                    fill_ratio=fill_ratio, rotate=allow_rotation, expand_cap=expand_cap,
                    out_dir=out_dir)
    results = run(cfg)
    rows = [r for res in results for r in res.rows]
    click.echo(f"wrote {len(rows)} rows to {Path(out_dir) / cfg.name / 'report.csv'}")


@cli.command("report")
@click.argument("csv_files", nargs=-1, type=click.Path(exists=True, dir_okay=False))
@_opt("--output", type=click.Path(dir_okay=False, path_type=Path),
      help="Also write the table here.")
def report_cmd(csv_files, output):
    """Average report rows over seeds, per design and stage."""
    try:
        agg = report_aggregate(csv_files)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    table = format_table(agg)
    click.echo(table)
    if output:
        output.write_text(table + "\n")


def main(argv=None) -> int:
    try:
        cli.main(args=argv, prog_name="flora", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except (click.ClickException, ConfigError) as exc:
        if isinstance(exc, click.ClickException):
            exc.show()
        else:
            click.echo(f"error: {exc}", err=True)
        return EXIT_CONFIG
    except click.exceptions.Abort:
        return EXIT_CONFIG
    except StageFailure as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
