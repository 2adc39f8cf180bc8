"""Command-line entry point: ``blockfade <command> [--config FILE] [--key value ...]``."""

from __future__ import annotations

import argparse
import logging
import re
import sys

from . import __version__
from .harness import ConfigError, ExperimentConfig, read_config_file, run

COMMANDS = {
    "rates": "rate-curves",
    "subrates": "subchannel-rates",
    "construct": "construct",
    "fer": "fer-sweep",
    "bound-check": "bound-check",
}

EXIT_OK, EXIT_CONFIG, EXIT_IO = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="blockfade", description="Polar coding simulator for block fading channels.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, experiment in COMMANDS.items():
        p = sub.add_parser(name, help=f"run the {experiment} experiment")
        p.add_argument("--config", help="flat key=value configuration file")
        p.add_argument("-v", "--verbose", action="store_true", help="progress messages on stderr")
        for key in ExperimentConfig.keys():
            if key == "experiment":
                continue
            p.add_argument(f"--{key.replace('_', '-')}", dest=key, default=None, metavar="VALUE")
    return parser


_NEGATIVE_VALUE = re.compile(r"^-[\d.]")


def _attach_negative_values(argv):
    """Turn ``--snr-grid -3:3:0.3`` into ``--snr-grid=-3:3:0.3``.

    argparse would otherwise read a grid starting with a minus sign as an
    option.
    """
    out = []
    i = 0
    while i < len(argv):
        tok = argv[i]
        if (tok.startswith("--") and "=" not in tok and i + 1 < len(argv)
                and _NEGATIVE_VALUE.match(argv[i + 1])):
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
            continue
        out.append(tok)
        i += 1
    return out


def main(argv=None) -> int:
    argv = _attach_negative_values(list(sys.argv[1:] if argv is None else argv))
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        values = read_config_file(args.config) if args.config else {}
        values.pop("experiment", None)
        for key in ExperimentConfig.keys():
            v = getattr(args, key, None)
            if v is not None:
                values[key] = v
        values["experiment"] = COMMANDS[args.command]
        cfg = ExperimentConfig.from_mapping(values)
    except ConfigError as exc:
        print(f"blockfade: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"blockfade: cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        run(cfg)
    except ConfigError as exc:
        print(f"blockfade: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"blockfade: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
