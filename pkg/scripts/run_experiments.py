"""Run every sample configuration in configs/ through the CLI."""

import sys
from pathlib import Path

try:
    import tomllib
except ImportError:
    import tomli as tomllib

from contactlo.cli.main import main

ROOT = Path(__file__).resolve().parent.parent


def run_all(out_root: Path) -> int:
    worst = 0
    for cfg in sorted((ROOT / "configs").glob("*.toml")):
        experiment = tomllib.loads(cfg.read_text())["experiment"]
        code = main([experiment, "--config", str(cfg), "--out", str(out_root / cfg.stem), "--quiet"])
        print(f"{cfg.name:24s} exit {code}")
        worst = max(worst, code)
    return worst


if __name__ == "__main__":
    sys.exit(run_all(Path(sys.argv[1]) if len(sys.argv) > 1 else ROOT / "out"))
