"""Command line entry point: ``mildns run | verify | sweep | report``."""

from __future__ import annotations

import argparse
import logging
import sys

from .config import load_config
from .errors import ConfigurationError, DivergenceError, MarchError, NumericalBlowup, NumericalError

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _overrides(pairs: list[str]) -> dict[str, str]:
    out = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigurationError(f"--set expects section.key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _cmd_run(args) -> int:
    from .runner import rerun_manifest, run
    if args.manifest:
        result = rerun_manifest(args.manifest, args.out)
    else:
        if not args.config:
            raise ConfigurationError("run needs a config file or --manifest")
        result = run(load_config(args.config, _overrides(args.set)), args.out)
    summary = result.manifest["summary"]
    print(f"wrote {result.outdir}  windows={summary['windows']} max_levels={summary['max_levels']} "
          f"final_kinetic={summary['final_kinetic']:.6e} energy_audit={summary['energy_audit']}")
    return EXIT_OK


def _cmd_verify(args) -> int:
    from .verify import format_row, run_checks
    if args.list:
        from .verify import REGISTRY
        for group, name, _ in REGISTRY:
            print(f"{group:<18} {name}")
        return EXIT_OK
    results = run_checks(args.group or None, args.check or None,
                         progress=lambda r: print(format_row(r), flush=True))
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_VERIFY_FAILED if failed else EXIT_OK


def _cmd_sweep(args) -> int:
    from .runner import sweep
    cfg = load_config(args.config, _overrides(args.set))
    rows = sweep(cfg, args.out, args.workers)
    for row in rows:
        print(f"{row['cell']}  {row['overrides'] or '-'}  {row['status']}")
    return EXIT_OK if all(r["status"] == "ok" for r in rows) else EXIT_NUMERICAL


def _cmd_report(args) -> int:
    from .runner import report
    rows = report(args.paths, args.out)
    if not rows:
        raise ConfigurationError("no manifest.json found under the given paths")
    for row in rows:
        print(f"{row['cell']}  {row['status']}  windows={row['windows']} "
              f"final_kinetic={row['final_kinetic']:.6e} energy_audit={row['energy_audit']}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mildns", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="march one configuration and write CSV/JSON outputs")
    p.add_argument("config", nargs="?", help="INI configuration file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--manifest", help="re-execute the run recorded in this manifest.json")
    p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override a single configuration key")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("verify", help="run the property suite and print a pass/fail table")
    p.add_argument("--group", action="append", default=[], help="restrict to a check group")
    p.add_argument("--check", action="append", default=[], help="restrict to a named check")
    p.add_argument("--list", action="store_true", help="list checks without running them")
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("sweep", help="fan out over the [sweep] grid of a configuration")
    p.add_argument("config", help="INI configuration file with a [sweep] section")
    p.add_argument("--out", required=True, help="directory receiving one subdirectory per cell")
    p.add_argument("--workers", type=int, default=1, help="size of the process pool")
    p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override a single configuration key")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("report", help="aggregate run manifests into a summary table")
    p.add_argument("paths", nargs="+", help="manifest files or directories to search")
    p.add_argument("--out", help="write the summary CSV here")
    p.set_defaults(func=_cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalBlowup, DivergenceError, MarchError, NumericalError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
