"""Simulate the reference campaign (3578 samples) and analyze it."""

import argparse
from pathlib import Path

from idleleak.cli import main as cli

ROOT = Path(__file__).resolve().parents[1]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", type=Path, default=ROOT / "configs" / "reference.json")
    ap.add_argument("--out", type=Path, default=ROOT / "runs" / "reference")
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args(argv)
    code = cli(["run", str(args.config), "--out", str(args.out), "--jobs", str(args.jobs), "--force"])
    if code == 0:
        code = cli(["analyze", str(args.out)])
    if code == 0:
        code = cli(["report", str(args.out)])
    raise SystemExit(code)


if __name__ == "__main__":
    main()
