"""Command line interface: grid, simulate, run, analyze, report."""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import analysis
from .estimators import ALL_METHODS, fit_method
from .harness import RunConfig, design_key_frame, draw_dataset, population_for, run_study
from .io import read_csv, write_csv, write_dataset_csv, write_path_csv, write_population
from .metrics import ErrorTable
from .simulation import design_grid, find_designs

log = logging.getLogger("mrbench")

# factor levels of designs referred to by their published numbers
DESIGN_ALIASES = {
    "9-like": dict(p=20, gamma=0.9, relpos=(5, 6, 7, 8), eta=0.0),
    "29-like": dict(p=20, gamma=0.9, relpos=(5, 6, 7, 8), eta=1.2),
}

ENV_OVERRIDES = {"MRBENCH_OUTPUT_DIR": "output_dir", "MRBENCH_PARALLEL_WIDTH": "parallel_width"}


class CliError(Exception):
    pass


def parse_designs(text):
    """Design selector: ids, ranges, ``N-like`` aliases or ``key=value/...``
    factor filters, comma separated. ``all`` selects the full grid."""
    text = str(text).strip()
    if text in ("", "all"):
        return tuple(d.design_id for d in design_grid())
    ids = set()
    for item in text.split(","):
        item = item.strip()
        if item in DESIGN_ALIASES:
            ids.update(d.design_id for d in find_designs(**DESIGN_ALIASES[item]))
        elif "=" in item:
            levels = {}
            for part in item.split("/"):
                key, _, val = part.partition("=")
                key = key.strip()
                if key == "relpos":
                    a, _, b = val.partition(":")
                    levels[key] = tuple(range(int(a), int(b) + 1)) if b else tuple(
                        int(v) for v in val.split(";")
                    )
                elif key == "p":
                    levels[key] = int(val)
                elif key in ("gamma", "eta"):
                    levels[key] = float(val)
                else:
                    raise CliError(f"unknown design factor {key!r}")
            found = find_designs(**levels)
            if not found:
                raise CliError(f"no design matches {item!r}")
            ids.update(d.design_id for d in found)
        elif "-" in item:
            a, _, b = item.partition("-")
            try:
                ids.update(range(int(a), int(b) + 1))
            except ValueError:
                raise CliError(f"bad design selector {item!r}") from None
        else:
            try:
                ids.add(int(item))
            except ValueError:
                raise CliError(f"bad design selector {item!r}") from None
    return tuple(sorted(ids))


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise CliError(f"not a boolean: {text!r}")


CONVERTERS = {
    "designs": parse_designs,
    "replicates": int,
    "methods": lambda s: tuple(m.strip().upper() for m in str(s).split(",") if m.strip()),
    "lmax": int,
    "senv_response_dim": int,
    "base_seed": int,
    "share_datasets_across_methods": _bool,
    "parallel_width": int,
    "output_dir": str,
    "var_cap": float,
}


def read_config_file(path):
    """``key = value`` lines; ``#`` starts a comment."""
    values = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise CliError(f"cannot read config {path}: {exc.strerror}") from None
    for num, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep:
            raise CliError(f"{path}:{num}: expected 'key = value'")
        if key not in CONVERTERS:
            raise CliError(f"{path}:{num}: unknown key {key!r}")
        try:
            values[key] = CONVERTERS[key](val.strip())
        except ValueError as exc:
            raise CliError(f"{path}:{num}: {exc}") from None
    return values


def build_config(args) -> RunConfig:
    values = {}
    if getattr(args, "config", None):
        values.update(read_config_file(args.config))
    for env, key in ENV_OVERRIDES.items():
        if os.environ.get(env):
            try:
                values[key] = CONVERTERS[key](os.environ[env])
            except ValueError:
                raise CliError(f"bad value in ${env}") from None
    for key, conv in CONVERTERS.items():
        val = getattr(args, key, None)
        if val is not None:
            values[key] = conv(val) if isinstance(val, str) and key != "output_dir" else val
    try:
        return RunConfig(**values)
    except ValueError as exc:
        raise CliError(str(exc)) from None


def _add_config_flags(p):
    p.add_argument("--config", help="key = value file supplying defaults")
    p.add_argument("--designs", help="ids, ranges, 9-like/29-like, or p=20/gamma=0.9/... filters")
    p.add_argument("--replicates", type=int)
    p.add_argument("--methods", help=f"comma list from {','.join(ALL_METHODS)}")
    p.add_argument("--lmax", type=int)
    p.add_argument("--senv-response-dim", dest="senv_response_dim", type=int)
    p.add_argument("--base-seed", dest="base_seed", type=int)
    p.add_argument(
        "--share-datasets", dest="share_datasets_across_methods", action="store_const", const=True
    )
    p.add_argument("--parallel-width", dest="parallel_width", type=int)
    p.add_argument("--output-dir", dest="output_dir")
    p.add_argument("--var-cap", dest="var_cap", type=float)


def cmd_grid(args):
    frame = design_key_frame()
    print(frame.to_csv(index=False, lineterminator="\n"), end="")
    return 0


def cmd_simulate(args):
    config = build_config(args)
    out = Path(config.output_dir)
    count = 0
    for design_id in config.designs:
        write_population(population_for(design_id, config.base_seed), out / "populations" / f"design_{design_id:02d}.txt")
        for method, rep in [(m, r) for m in config.methods for r in range(1, config.replicates + 1)]:
            _, ds = draw_dataset(config, design_id, method, rep)
            write_dataset_csv(ds, out / "datasets" / f"d{design_id:02d}_{method}_r{rep:03d}.csv")
            if args.paths:
                path = fit_method(method, ds.x, ds.y, lmax=config.lmax, senv_response_dim=config.senv_response_dim, var_cap=config.var_cap)
                write_path_csv(path, out / "paths" / f"d{design_id:02d}_{method}_r{rep:03d}.csv", design_id, method, rep)
            count += 1
    print(f"wrote {count} datasets and {len(config.designs)} populations to {out}")
    return 0


def cmd_run(args):
    config = build_config(args)
    log.info("running %d tasks into %s", len(config.tasks()), config.output_dir)
    result = run_study(config, resume=not args.fresh)
    print(
        f"{len(result.manifest['tasks'])} tasks complete; "
        f"u: {len(result.u)} rows, v: {len(result.v)} rows in {config.output_dir}"
    )
    return 0


def _load_results(out):
    out = Path(out)
    needed = ["u.csv", "v.csv", "design_key.csv"]
    if not all((out / n).exists() for n in needed):
        raise CliError(f"no results found in {out}; run `mrbench run` first")
    u = ErrorTable(read_csv(out / "u.csv", "error-dataset"), "u")
    v = ErrorTable(read_csv(out / "v.csv", "component-dataset"), "v")
    key = read_csv(out / "design_key.csv", "design-key")
    return u, v, key


def cmd_analyze(args):
    out = Path(args.output_dir or os.environ.get("MRBENCH_OUTPUT_DIR") or RunConfig.output_dir)
    u, v, key = _load_results(out)
    adir = out / "analysis"
    for name, table in (("error", u), ("component", v)):
        factors = analysis.factor_frame(table.frame, key)
        present = [f for f in analysis.FACTORS if factors[f].nunique() > 1]
        x, terms = analysis.build_model_matrix(factors[present], max_order=args.max_order)
        res = analysis.manova_pillai(table.values.astype(float), x, terms)
        write_csv(analysis.manova_frame(res), adir / f"manova_{name}.csv", "manova")
        pca = analysis.pca_scores(table.values.astype(float))
        scores = table.frame[["design_id", "method", "replicate"]].copy()
        for f in ("p", "gamma", "eta", "relpos"):
            scores[f] = factors[f].to_numpy()
        for k in range(pca.scores.shape[1]):
            scores[f"pc{k + 1}"] = pca.scores[:, k]
        write_csv(scores, adir / f"pca_scores_{name}.csv", "pca-scores")
        for term in args.effects:
            parts = term.split(":")
            eff = analysis.effect_means(table.values.astype(float), factors, parts)
            write_csv(eff, adir / f"effects_{name}_{'_'.join(parts)}.csv", "effect-means")
        print(f"{name} model:")
        print(analysis.manova_frame(res).head(10).to_string(index=False))
    return 0


def cmd_report(args):
    out = Path(args.output_dir or os.environ.get("MRBENCH_OUTPUT_DIR") or RunConfig.output_dir)
    if not (out / "records.csv").exists():
        raise CliError(f"no results found in {out}; run `mrbench run` first")
    records = read_csv(out / "records.csv", "records")
    ids = None
    if args.designs:
        ids = [d for d in parse_designs(args.designs) if d in set(records["design_id"])]
        if not ids:
            raise CliError("none of the requested designs have results")
    table = analysis.summary_table(records, ids, methods=[m for m in analysis.STUDY_METHODS if m in set(records["method"])])
    write_csv(table, out / "report" / "summary_table.csv", "summary-table")
    print(table.to_string(index=False))
    if (out / "u.csv").exists():
        u, v, key = _load_results(out)
        for name, t in (("error", u), ("component", v)):
            factors = analysis.factor_frame(t.frame, key)
            vals = t.values.astype(float)
            if vals.shape[0] > vals.shape[1] and np.ptp(vals) > 0:
                dens = analysis.score_densities(analysis.pca_scores(vals).scores[:, 0], factors)
                write_csv(dens, out / "report" / f"densities_{name}.csv", "score-density")
    return 0


def make_parser():
    parser = argparse.ArgumentParser(prog="mrbench", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("grid", help="print the 32 designs").set_defaults(func=cmd_grid)
    p = sub.add_parser("simulate", help="write populations and datasets only")
    _add_config_flags(p)
    p.add_argument("--paths", action="store_true", help="also export fitted coefficient paths")
    p.set_defaults(func=cmd_simulate)
    p = sub.add_parser("run", help="run the factorial study")
    _add_config_flags(p)
    p.add_argument("--fresh", action="store_true", help="ignore results already on disk")
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("analyze", help="PCA, MANOVA and effect tables on stored u, v")
    p.add_argument("--output-dir", dest="output_dir")
    p.add_argument("--max-order", type=int, default=3)
    p.add_argument(
        "--effects",
        nargs="*",
        default=["method:eta", "gamma:relpos", "method:gamma:relpos"],
        help="factor interactions for effect tables, e.g. method:gamma",
    )
    p.set_defaults(func=cmd_analyze)
    p = sub.add_parser("report", help="summary tables and score densities")
    p.add_argument("--output-dir", dest="output_dir")
    p.add_argument("--designs")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    try:
        return args.func(args)
    except CliError as exc:
        print(f"mrbench: error: {exc}", file=sys.stderr)
        return 1
    except (RuntimeError, ValueError) as exc:
        print(f"mrbench: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
