import argparse
import logging
import os
import sys
from typing import List, Optional

from .config import desk_scale, list_presets, load_config, resolve_config_path, validate_config
from .errors import ConfigurationError, SchwarzPinnError
from .reports import ensure_dir, write_report
from .runner import run_experiment, run_oracle

LOG_FORMAT = "%(asctime)s - %(levelname)s - %(message)s"
LOG_FILE = "schwarz_pinn.log"

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def configure_logging(out_dir: Optional[str] = None, verbose: bool = False):
    """Root logger to stderr and, when out_dir is given, to <out_dir>/schwarz_pinn.log"""
    handlers: List[logging.Handler] = [logging.StreamHandler()]
    if out_dir:
        ensure_dir(out_dir)
        handlers.append(logging.FileHandler(os.path.join(out_dir, LOG_FILE)))
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format=LOG_FORMAT,
        handlers=handlers,
        force=True,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="schwarz-pinn",
        description="Additive Schwarz iterations with neural-network subdomain solvers",
    )
    parser.add_argument("--verbose", "-v", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (
        ("run", "run a Schwarz-PINN or single-domain experiment"),
        ("oracle", "run the finite-difference Schwarz oracle sweep"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("config", help=f"config file or preset name ({', '.join(list_presets()) or 'none found'})")
        cmd.add_argument("--jobs", type=int, default=1, help="worker threads (seeds, subdomain solves, sweep points)")
        cmd.add_argument("--desk-scale", action="store_true", help="epochs / 5 and outer iterations / 2")
        cmd.add_argument("--out", default=None, help="output directory (overrides output.dir)")

    validate = sub.add_parser("validate", help="check a config file and print diagnostics")
    validate.add_argument("config", help="config file or preset name")

    report = sub.add_parser("report", help="aggregate every summary.json under a directory")
    report.add_argument("dir", help="results directory")
    return parser


def _run(args, runner) -> int:
    path = resolve_config_path(args.config)
    config = load_config(path)
    if args.desk_scale:
        config = desk_scale(config)
    out_dir = args.out or config.output.dir
    configure_logging(out_dir, args.verbose)
    logging.info(f"Loaded config '{config.name}' from {path}{' (desk scale)' if config.desk_scale else ''}")
    if args.jobs < 1:
        raise ConfigurationError(f"--jobs must be >= 1, got {args.jobs}")
    runner(config, jobs=args.jobs, out_dir=out_dir)
    return EXIT_OK


def _validate(args) -> int:
    path = resolve_config_path(args.config)
    config, diagnostics = validate_config(path)
    if config is None:
        for line in diagnostics:
            print(line)
        return EXIT_FAILURE
    print("OK")
    return EXIT_OK


def _report(args) -> int:
    if not os.path.isdir(args.dir):
        raise ConfigurationError(f"not a directory: {args.dir}")
    frame = write_report(args.dir)
    if frame.empty:
        print(f"No summaries under {args.dir}")
        return EXIT_FAILURE
    print(frame.to_string(index=False))
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE

    if args.command in ("validate", "report"):
        configure_logging(None, args.verbose)

    try:
        if args.command == "run":
            return _run(args, run_experiment)
        if args.command == "oracle":
            return _run(args, run_oracle)
        if args.command == "validate":
            return _validate(args)
        return _report(args)
    except SchwarzPinnError as e:
        logging.error(f"{args.command} failed: {e}")
        for line in getattr(e, "diagnostics", None) or []:
            print(line, file=sys.stderr)
        return EXIT_FAILURE
    except OSError as e:
        logging.error(f"{args.command} failed on {getattr(e, 'filename', None) or 'file'}: {e}")
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
