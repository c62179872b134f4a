"""Command line entry point.

Exit codes: 0 success, 1 validation failure, 2 runtime instability.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from .config import OUTPUT_ENV, PRESETS, ConfigError, load_and_validate, to_ini
from .diagnostics import CausalityError, energy_decay_summary, measure_reflection, required_margin_cells
from .solver import InstabilityError, run

EXIT_OK, EXIT_INVALID, EXIT_UNSTABLE = 0, 1, 2


def _print_derived(cfg):
    for k, v in cfg.derived().items():
        print(f"{k} = {v:.6g}" if isinstance(v, float) else f"{k} = {v}")


def cmd_validate(args) -> int:
    cfg = load_and_validate(args.config)
    print(f"config: {args.config}  (valid)")
    _print_derived(cfg)
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = load_and_validate(args.config)
    out = args.out or cfg.output_directory or os.environ.get(OUTPUT_ENV) or "out"
    _print_derived(cfg)
    try:
        report = run(cfg, out_dir=out, snapshot_every=args.snapshot_every,
                     energy_every=args.energy_every, progress=True)
    except InstabilityError as exc:
        print(f"unstable: {exc}", file=sys.stderr)
        return EXIT_UNSTABLE
    print(f"steps = {report.steps}")
    print(f"wall_time = {report.wall_time:.3f} s")
    if report.energy is not None and len(report.energy):
        print(energy_decay_summary(report.energy).describe())
    print(f"outputs in {Path(out).resolve()}")
    return EXIT_OK


def cmd_reflection(args) -> int:
    cfg = load_and_validate(args.config)
    if args.pml_cells:
        from .config import resolve

        cfg = resolve(replace(cfg, pml_cells=args.pml_cells))
    margin = args.margin if args.margin is not None else required_margin_cells(cfg)
    try:
        rep = measure_reflection(cfg, margin)
    except CausalityError as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except InstabilityError as exc:
        print(f"unstable: {exc}", file=sys.stderr)
        return EXIT_UNSTABLE
    for k, v in rep.__dict__.items():
        print(f"{k} = {v}")
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        rep.write(args.out)
    return EXIT_OK


def cmd_plot(args) -> int:
    from .plotting import available_tags, plot_energy, plot_midplanes

    run_dir = Path(args.run_dir)
    if (run_dir / "energy.csv").exists():
        print(plot_energy(run_dir))
    if available_tags(run_dir):
        print(plot_midplanes(run_dir, args.tag))
    return EXIT_OK


def cmd_preset(args) -> int:
    if args.name is None:
        print("\n".join(PRESETS))
        return EXIT_OK
    print(to_ini(load_and_validate(args.name)), end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="anisopml", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="check a scenario and print derived quantities")
    v.add_argument("config", help="scenario file or preset name")
    v.set_defaults(func=cmd_validate)

    r = sub.add_parser("run", help="run a scenario")
    r.add_argument("config")
    r.add_argument("--snapshot-every", type=int, default=None, metavar="STEPS")
    r.add_argument("--energy-every", type=int, default=None, metavar="STEPS")
    r.add_argument("--out", default=None, help=f"output directory (default: config, ${OUTPUT_ENV}, ./out)")
    r.set_defaults(func=cmd_run)

    f = sub.add_parser("reflection-test", help="measure PML reflection against an enlarged domain")
    f.add_argument("config")
    f.add_argument("--margin", type=int, default=None, help="extra cells of the reference domain")
    f.add_argument("--pml-cells", type=int, default=None)
    f.add_argument("--out", default=None, help="write the report to this file")
    f.set_defaults(func=cmd_reflection)

    pl = sub.add_parser("plot", help="render energy trace and mid-plane slices of a run directory")
    pl.add_argument("run_dir")
    pl.add_argument("--tag", type=int, default=None, help="snapshot step (default: last)")
    pl.set_defaults(func=cmd_plot)

    ps = sub.add_parser("preset", help="list presets or print one as a scenario file")
    ps.add_argument("name", nargs="?")
    ps.set_defaults(func=cmd_preset)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
