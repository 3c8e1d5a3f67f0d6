"""Command-line entry point: ``exchange-q validate FILE`` and ``exchange-q run FILE -o OUT``."""

import argparse
import json
import logging
import sys

from .errors import ConfigError, ExchangeQError
from .scenario import exit_code, load, run_config

logger = logging.getLogger("exchangeq")


def _read(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg} at line {exc.lineno}", "") from None


def cmd_validate(args):
    config = _read(args.config)
    _, rows = load(config, collect=True)
    width = max((len(what) for what, _, _ in rows), default=0)
    failed = 0
    for what, ok, msg in rows:
        print(f"{'PASS' if ok else 'FAIL'}  {what.ljust(width)}  {msg}".rstrip())
        failed += not ok
    if failed:
        print(f"{failed} check(s) failed")
        return 3
    print("all checks passed")
    return 0


def cmd_run(args):
    config = _read(args.config)
    report = run_config(config, threads=args.threads, config_name=args.config)
    text = json.dumps(report, indent=2)
    if args.output == "-":
        print(text)
    else:
        with open(args.output, "w") as fh:
            fh.write(text + "\n")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="exchange-q", description=__doc__)
    parser.add_argument("--threads", type=int, default=1, help="worker threads (never changes results)")
    parser.add_argument("--log-level", default="WARNING", help="logging level, e.g. INFO or DEBUG")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("validate", help="check every object in a scenario without running inference")
    p.add_argument("config")
    p.set_defaults(func=cmd_validate)
    p = sub.add_parser("run", help="run every query in a scenario and write a JSON report")
    p.add_argument("config")
    p.add_argument("-o", "--output", default="-", help="report path, '-' for stdout")
    p.set_defaults(func=cmd_run)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ExchangeQError as exc:
        name = getattr(exc, "invariant", None) or type(exc).__name__
        print(f"error [{type(exc).__name__}:{name}]: {exc}", file=sys.stderr)
        return exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
