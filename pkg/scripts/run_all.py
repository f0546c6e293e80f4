"""Run every YAML config in scripts/configs through the CLI.

    python3 scripts/run_all.py [--outdir results] [--threads 1] [name ...]
"""

import argparse
import sys
from pathlib import Path

from cfmimo import cli

HERE = Path(__file__).parent / "configs"
COMMAND = {"maxmin-cdf": "maxmin", "nmse-sweep": "nmse-sweep", "ee-sweep": "ee-sweep",
           "validate-aqnm": "validate-aqnm"}


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("names", nargs="*", help="config stems to run (default: all)")
    ap.add_argument("--outdir", default="results")
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--seed", type=int)
    args = ap.parse_args()

    import yaml
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    configs = sorted(HERE.glob("*.yaml"))
    if args.names:
        configs = [c for c in configs if c.stem in args.names]
    failed = 0
    for path in configs:
        kind = (yaml.safe_load(path.read_text()) or {}).get("experiment", {}).get("kind", "maxmin-cdf")
        argv = [COMMAND[kind], "--config", str(path), "--out", str(outdir / f"{path.stem}.csv"),
                "--threads", str(args.threads)]
        if args.seed is not None:
            argv += ["--seed", str(args.seed)]
        print(f"== {path.stem} ({kind})", flush=True)
        code = cli.main(argv)
        failed += code != 0
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
