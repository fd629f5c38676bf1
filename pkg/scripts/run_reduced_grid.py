"""All 32 designs with 10 replicates per method, followed by the MANOVA
error and component models and a few effect tables.

    python3 scripts/run_reduced_grid.py --output-dir results/grid --parallel-width 4
"""
import argparse
import logging

from mrbench import analysis
from mrbench.harness import RunConfig, design_key_frame, run_study
from mrbench.io import write_csv

EFFECTS = (("method", "eta"), ("gamma", "relpos"), ("method", "gamma", "relpos"))


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--output-dir", default="results/grid")
    ap.add_argument("--replicates", type=int, default=10)
    ap.add_argument("--base-seed", type=int, default=RunConfig.base_seed)
    ap.add_argument("--parallel-width", type=int, default=1)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    cfg = RunConfig(
        replicates=args.replicates,
        base_seed=args.base_seed,
        parallel_width=args.parallel_width,
        output_dir=args.output_dir,
    )
    res = run_study(cfg)
    key = design_key_frame()
    for name, table in (("error", res.u), ("component", res.v)):
        factors = analysis.factor_frame(table.frame, key)
        x, terms = analysis.build_model_matrix(factors)
        frame = analysis.manova_frame(analysis.manova_pillai(table.values.astype(float), x, terms))
        write_csv(frame, f"{args.output_dir}/manova_{name}.csv", "manova")
        print(f"\n{name} model, main effects")
        print(frame[frame.term.isin(analysis.FACTORS)].to_string(index=False))
        for term in EFFECTS:
            eff = analysis.effect_means(table.values.astype(float), factors, term)
            write_csv(eff, f"{args.output_dir}/effects_{name}_{'_'.join(term)}.csv", "effect-means")


if __name__ == "__main__":
    main()
