"""Command-line front door.

Subcommands:
  run <config>        single link (or the config's sweep if one is set)
  sweep <config>      parameter sweep from the config's sweep section
  optimize <config>   grid-search one knob (--knob, --grid)
  loadtable <config>  emit the DMT bit/power loading table

Exit codes: 0 success, 1 all sweep points failed, 2 IO error, 3 validation.
"""

import argparse
import logging
import sys
from dataclasses import replace

from .config import parse_config
from .errors import ConfigError, SimulationError
from .harness import (
    all_points_failed,
    default_thread_count,
    optimize_knob,
    run_experiment,
    summarize,
)

EXIT_OK = 0
EXIT_ALL_FAILED = 1
EXIT_IO = 2
EXIT_VALIDATION = 3

log = logging.getLogger("dwdmsim")


def _add_common(parser):
    parser.add_argument("config", help="experiment config (JSON)")
    parser.add_argument("--out", help="override the config's output_path")
    parser.add_argument("--seeds", type=int, help="override replicate_seeds")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker processes (default: $DWDMSIM_THREADS or 1)")
    parser.add_argument("--verbose", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(prog="dwdmsim", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("run", "sweep"):
        _add_common(sub.add_parser(name))
    opt = sub.add_parser("optimize")
    _add_common(opt)
    opt.add_argument("--knob", required=True,
                     choices=("level_adjust", "vsb_offset", "tdcm"))
    opt.add_argument("--grid", required=True,
                     help="comma-separated knob values, e.g. 0,680,1360")
    lt = sub.add_parser("loadtable")
    _add_common(lt)
    return parser


def _load_experiment(args):
    experiment = parse_config(args.config)
    if args.out:
        experiment = replace(experiment, output_path=args.out)
    if args.seeds:
        experiment = replace(experiment, replicate_seeds=args.seeds)
    return experiment


def _cmd_run(args):
    experiment = _load_experiment(args)
    if args.command == "run" and experiment.sweep_axis != "none":
        log.info("config defines a sweep; running it")
    rows = run_experiment(experiment, threads=args.threads or default_thread_count())
    print(summarize(rows))
    print(f"wrote {len(rows)} rows to {experiment.output_path}")
    return EXIT_ALL_FAILED if all_points_failed(rows) else EXIT_OK


def _cmd_optimize(args):
    experiment = _load_experiment(args)
    try:
        grid = [float(v) for v in args.grid.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"invalid --grid {args.grid!r}", field="grid")
    best, rows = optimize_knob(experiment, args.knob, grid,
                               threads=args.threads or default_thread_count())
    print(summarize(rows))
    print(f"best {args.knob} = {best:g}")
    return EXIT_ALL_FAILED if all_points_failed(rows) else EXIT_OK


def _cmd_loadtable(args):
    from .wdm import dmt_probe_and_load

    experiment = _load_experiment(args)
    link = experiment.link
    if link.format != "dmt":
        raise ConfigError("loadtable requires format=dmt", field="format")
    _profiles, tables = dmt_probe_and_load(link)
    out = args.out or "loading_table.txt"
    for idx, table in enumerate(tables):
        path = out if len(tables) == 1 else f"{out}.ch{idx}"
        table.serialize(path, active_start=link.dmt.active_start)
        print(f"channel {idx}: {table.bits_per_symbol} bits/symbol "
              f"({table.bits_per_symbol * link.dmt.dmt_symbol_rate / 1e9:.2f} Gbit/s) -> {path}")
    return EXIT_OK


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command in ("run", "sweep"):
            return _cmd_run(args)
        if args.command == "optimize":
            return _cmd_optimize(args)
        if args.command == "loadtable":
            return _cmd_loadtable(args)
        return EXIT_VALIDATION
    except FileNotFoundError as exc:
        log.error("IO error: %s", exc)
        return EXIT_IO
    except OSError as exc:
        log.error("IO error: %s", exc)
        return EXIT_IO
    except ConfigError as exc:
        log.error("validation error%s: %s",
                  f" ({exc.field})" if exc.field else "", exc)
        return EXIT_VALIDATION
    except SimulationError as exc:
        log.error("simulation error: %s", exc)
        return EXIT_ALL_FAILED


if __name__ == "__main__":
    sys.exit(main())
