"""Command-line entry point: ``mgs <subcommand> [flags]``.

Settings come from an optional flat ``key=value`` file (``--config``), then
``--set key=value`` pairs, then the dedicated flags; later sources win.
Failures print one line ``mgs-error kind=<kind> message=<json string>`` to
stderr and exit nonzero (2 for configuration errors, 1 otherwise).
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .experiments import EXPERIMENTS, ConfigError, ExperimentConfig, read_config_file, run
from .tensorfile import TensorFileError


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mgs", description="Narrow-accumulator summation experiments.")
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--config", help="key=value settings file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override one config key (repeatable)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="CSV output path (default: stdout)")
    p.add_argument("--trials", type=int)
    p.add_argument("--strategies", help="comma-separated strategy names")
    p.add_argument("--narrow-bits", type=int)
    p.add_argument("--wide-bits", type=int)
    p.add_argument("--skipping", action="store_true", default=None,
                   help="gate FP8 products below 2^-9")
    p.add_argument("--model", help="model directory for make-mlp / mlp-infer")
    return p


def config_from_args(argv=None) -> ExperimentConfig:
    args = build_parser().parse_args(argv)
    values: dict[str, object] = {}
    if args.config:
        values.update(read_config_file(args.config))
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        values[k.strip()] = v.strip()
    for name in ("seed", "out", "trials", "strategies", "narrow_bits", "wide_bits",
                 "skipping", "model"):
        v = getattr(args, name)
        if v is not None:
            values[name] = v
    return ExperimentConfig.from_mapping(args.experiment, values)


def _fail(kind: str, message: str, code: int) -> int:
    print(f"mgs-error kind={kind} message={json.dumps(message)}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    try:
        cfg = config_from_args(argv)
    except ConfigError as e:
        return _fail("config", str(e), 2)
    try:
        text = run(cfg)
    except ConfigError as e:
        return _fail("config", str(e), 2)
    except TensorFileError as e:
        return _fail("tensorfile", str(e), 1)
    except (ValueError, RuntimeError, OverflowError, OSError) as e:
        return _fail("runtime", str(e), 1)
    if cfg.out:
        try:
            Path(cfg.out).write_bytes(text.encode())
        except OSError as e:
            return _fail("io", f"cannot write {cfg.out}: {e.strerror}", 1)
    else:
        sys.stdout.write(text)
        sys.stdout.flush()
    return 0


if __name__ == "__main__":
    sys.exit(main())
