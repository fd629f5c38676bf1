"""The full 32 x 5 x 50 study (8000 datasets), resumable.

Takes roughly an hour per core for the p = 20 envelope fits; interrupted runs
pick up where they stopped when started again with the same arguments.

    python3 scripts/run_full_study.py --output-dir results/full --parallel-width 8
"""
import argparse
import logging

from mrbench.cli import main as cli_main


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--output-dir", default="results/full")
    ap.add_argument("--parallel-width", type=int, default=1)
    ap.add_argument("--base-seed", type=int, default=None)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO)
    common = ["--output-dir", args.output_dir]
    run = ["run", *common, "--parallel-width", str(args.parallel_width)]
    if args.base_seed is not None:
        run += ["--base-seed", str(args.base_seed)]
    for argv in (run, ["analyze", *common], ["report", *common]):
        code = cli_main(argv)
        if code:
            raise SystemExit(code)


if __name__ == "__main__":
    main()
