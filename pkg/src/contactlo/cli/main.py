"""Command-line entry point.

Exit codes: 0 ok, 2 configuration error, 3 numerical failure, 4 invariant
violation.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

try:
    import tomllib as tomli
except ImportError:  # Python < 3.11
    import tomli

from ..entropy import FamilyError
from ..evolution import EvolveConfigError, InvariantViolation
from ..extension import ExtensionError
from ..geometry import GeometryError
from ..kernel import KernelError
from ..lagrangians import LegendreError, ModelError
from .config import EXPERIMENTS, ConfigError, parse_dict
from .runner import run

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_INVARIANT = 0, 2, 3, 4


def _global_flags(parser, suppress: bool) -> None:
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--config", type=Path, default=d(None), help="TOML or JSON experiment file")
    parser.add_argument("--out", default=d(None), help="output directory")
    parser.add_argument("--seed", type=int, default=d(None), help="unsigned 64-bit seed")
    parser.add_argument("--threads", type=int, default=d(1))
    parser.add_argument("--quiet", action="store_true", default=d(False))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="contactlo", description=__doc__.splitlines()[0])
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)
    cmds = {}
    for name in EXPERIMENTS:
        p = sub.add_parser(name)
        _global_flags(p, suppress=True)
        p.add_argument("--model", help="model preset")
        p.add_argument("--lambda", dest="lam", type=float, help="discount rate")
        cmds[name] = p
    k = cmds["kernel"]
    k.add_argument("--t", type=float)
    k.add_argument("--delta", type=float, nargs="+")
    k.add_argument("--method", choices=("closed", "shoot", "dp"))
    k.add_argument("--csv", help="also copy the values CSV to this path")
    e = cmds["evolve"]
    e.add_argument("--phi", help="sine|cosine|constant|zero or a grid-function CSV")
    e.add_argument("--t", type=float)
    e.add_argument("--tau", type=float)
    e.add_argument("--engine", choices=("kernel", "semilag"))
    low = cmds["entropy-lower"]
    low.add_argument("--eps", type=float, nargs="+")
    return parser


def _raw_config(args) -> dict:
    raw = {}
    if args.config is not None:
        path = Path(args.config)
        if not path.is_file():
            raise ConfigError([f"config file {str(path)!r} does not exist"])
        try:
            raw = json.loads(path.read_text()) if path.suffix == ".json" else tomli.loads(path.read_text())
        except (tomli.TOMLDecodeError, json.JSONDecodeError) as exc:
            raise ConfigError([f"cannot parse {path.name}: {exc}"]) from exc
        if raw.get("experiment", args.command) != args.command:
            raise ConfigError([f"config describes {raw['experiment']!r} but the subcommand is {args.command!r}"])
    else:
        raw["seed"] = 0
    raw["experiment"] = args.command
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.out is not None:
        raw["output"] = args.out
    model = raw.setdefault("model", {})
    if args.model:
        model["preset"] = args.model
    if args.lam is not None:
        model["lambda"] = args.lam
    block = raw.setdefault(args.command, {})
    for key in ("t", "delta", "method", "phi", "tau", "eps"):
        val = getattr(args, key, None)
        if val is not None:
            block[key] = val
    if getattr(args, "engine", None):
        raw.setdefault("engine", {})["kind"] = args.engine
    return raw


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out_dir = Path(args.out or "out")
    try:
        cfg = parse_dict(_raw_config(args))
        out_dir = Path(cfg.output)
        manifest = run(cfg, threads=args.threads)
        if getattr(args, "csv", None):
            Path(args.csv).write_bytes((out_dir / "kernel_values.csv").read_bytes())
        if not args.quiet:
            print(json.dumps({"status": "ok", "experiment": cfg.experiment, "summary": manifest.summary}, sort_keys=True, default=str))
        return EXIT_OK
    except (ConfigError, EvolveConfigError, ModelError, GeometryError, FamilyError, ExtensionError, ValueError) as exc:
        code, kind = EXIT_CONFIG, "config"
        detail = exc.violations if isinstance(exc, ConfigError) else [str(exc)]
    except InvariantViolation as exc:
        code, kind, detail = EXIT_INVARIANT, "invariant", [str(exc)]
    except (KernelError, LegendreError, FloatingPointError, ArithmeticError, RuntimeError) as exc:
        code, kind, detail = EXIT_NUMERIC, "numerical", [str(exc)]
    err = {"status": "error", "kind": kind, "exit_code": code, "errors": detail}
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "error.json").write_text(json.dumps(err, indent=2) + "\n")
    except OSError:
        pass
    print(json.dumps(err), file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
