"""Run every bundled scenario through the CLI and report exit codes and wall times."""

import argparse
import contextlib
import io
import sys
import tempfile
import time
from pathlib import Path

from mfglab import cli


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=None, help="output root (default: a temporary directory)")
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    root = Path(args.out or tempfile.mkdtemp(prefix="mfglab-corpus-"))
    worst = 0
    for name, kind, _ in cli.list_examples():
        start = time.perf_counter()
        with contextlib.redirect_stdout(io.StringIO()):
            code = cli.main(["run", "--config", name, "--out", str(root / Path(name).stem), "--workers", str(args.workers)])
        worst = max(worst, code)
        print(f"{name:28s} {kind:9s} exit={code} {time.perf_counter() - start:6.1f}s")
    print(f"outputs in {root}")
    sys.exit(worst)


if __name__ == "__main__":
    main()
