"""Design 9-like and 29-like study: 50 replicates of all five methods, then
the minimum-error table.

    python3 scripts/run_desk_reproduction.py --output-dir results/desk
"""
import argparse
import logging

from mrbench.analysis import summary_table
from mrbench.cli import parse_designs
from mrbench.harness import RunConfig, run_study
from mrbench.io import write_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--output-dir", default="results/desk")
    ap.add_argument("--replicates", type=int, default=50)
    ap.add_argument("--base-seed", type=int, default=RunConfig.base_seed)
    ap.add_argument("--parallel-width", type=int, default=1)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    cfg = RunConfig(
        designs=parse_designs("9-like,29-like"),
        replicates=args.replicates,
        base_seed=args.base_seed,
        parallel_width=args.parallel_width,
        output_dir=args.output_dir,
    )
    res = run_study(cfg)
    table = summary_table(res.records)
    write_csv(table, f"{args.output_dir}/summary_table.csv", "summary-table")
    print(table.to_string(index=False))


if __name__ == "__main__":
    main()
