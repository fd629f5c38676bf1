"""PCA scores, MANOVA with Pillai's trace, effect means and summary tables
for the error and component datasets."""
from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy import stats

from .estimators import STUDY_METHODS
from .metrics import KEYS, averaged_paths

FACTORS = ("p", "gamma", "eta", "relpos", "method")


@dataclass
class PcaSummary:
    scores: np.ndarray
    loadings: np.ndarray
    explained: np.ndarray
    mean: np.ndarray


def pca_scores(data):
    """Mean-centered PCA (no scaling).

    Components come in descending variance order; each loading column is
    signed so its largest-magnitude entry is positive.
    """
    data = np.asarray(data, dtype=float)
    n, m = data.shape
    if n <= m:
        raise ValueError(f"PCA needs more rows than columns, got {n}x{m}")
    if not np.all(np.isfinite(data)):
        raise ValueError("PCA input contains non-finite values")
    mean = data.mean(axis=0)
    xc = data - mean
    cov = xc.T @ xc / (n - 1)
    evals, evecs = np.linalg.eigh(cov)
    evals, evecs = evals[::-1], evecs[:, ::-1]
    total = evals.sum()
    if total <= 0:
        raise ValueError("PCA input has zero variance")
    big = np.argmax(np.abs(evecs), axis=0)
    evecs = evecs * np.sign(evecs[big, np.arange(m)])
    evals = np.clip(evals, 0, None)
    return PcaSummary(xc @ evecs, evecs, evals / evals.sum(), mean)


def factor_frame(table, design_key):
    """Factor columns aligned to the rows of a u/v table.

    ``table`` carries the key columns; ``design_key`` maps design_id to
    p, gamma, eta, relpos.
    """
    keys = table[KEYS].reset_index(drop=True)
    merged = keys.merge(design_key, on="design_id", how="left", validate="many_to_one")
    if merged[["p", "gamma", "eta", "relpos"]].isna().any().any():
        raise ValueError("design key does not cover every design in the table")
    if not merged[KEYS].equals(keys):
        raise ValueError("factor rows are not aligned with the table")
    out = pd.DataFrame(
        {
            "p": merged["p"].astype(int),
            "gamma": merged["gamma"].astype(float),
            "eta": merged["eta"].astype(float),
            "relpos": merged["relpos"].astype(str),
            "method": merged["method"].astype(str),
        }
    )
    return out


def _levels(col, name):
    vals = pd.unique(col)
    if name == "method":
        known = [m for m in STUDY_METHODS if m in set(vals)]
        return known + sorted(v for v in vals if v not in STUDY_METHODS)
    return sorted(vals)


def build_model_matrix(factors, max_order=3):
    """Treatment-coded design matrix with interactions up to ``max_order``.

    Returns ``(X, terms)`` where ``terms`` is a list of ``(label, slice)``
    starting with the intercept. Terms are ordered by interaction order, and
    within an order by factor position in ``FACTORS``.
    """
    names = [f for f in FACTORS if f in factors.columns]
    dummies = {}
    for name in names:
        levels = _levels(factors[name], name)
        col = factors[name].to_numpy()
        dummies[name] = np.column_stack([col == lev for lev in levels[1:]]).astype(float) if len(
            levels
        ) > 1 else np.zeros((len(col), 0))
    n = len(factors)
    blocks = [np.ones((n, 1))]
    terms = [("(Intercept)", slice(0, 1))]
    pos = 1
    for order in range(1, max_order + 1):
        for combo in itertools.combinations(names, order):
            parts = [dummies[c] for c in combo]
            cols = parts[0]
            for nxt in parts[1:]:
                cols = np.einsum("ij,ik->ijk", cols, nxt).reshape(n, -1)
            if cols.shape[1] == 0:
                continue
            blocks.append(cols)
            terms.append((":".join(combo), slice(pos, pos + cols.shape[1])))
            pos += cols.shape[1]
    x = np.hstack(blocks)
    rank = 0
    for label, sl in terms:
        new = np.linalg.matrix_rank(x[:, : sl.stop])
        if new < rank + (sl.stop - sl.start):
            raise ValueError(f"model matrix is rank deficient at term {label!r}")
        rank = new
    return x, terms


@dataclass
class ManovaTermResult:
    term: str
    df: int
    pillai: float
    approx_f: float
    df1: float
    df2: float
    p_value: float


def sequential_sscp(y, x, terms):
    """Sequential hypothesis SSCP matrices per term and the residual SSCP."""
    y = np.asarray(y, dtype=float)
    q, r = np.linalg.qr(x)
    if np.min(np.abs(np.diag(r))) <= 1e-10 * np.max(np.abs(np.diag(r))):
        raise ValueError("model matrix is not of full column rank")
    eff = q.T @ y
    hyp = {label: eff[sl].T @ eff[sl] for label, sl in terms}
    resid = y - q @ eff
    return hyp, resid.T @ resid, x.shape[0] - x.shape[1]


def pillai_f(v, df_t, m, df_e):
    """F approximation of Pillai's trace: (F, df1, df2)."""
    s = min(df_t, m)
    mm = (abs(df_t - m) - 1) / 2
    nn = (df_e - m - 1) / 2
    df1 = s * (2 * mm + s + 1)
    df2 = s * (2 * nn + s + 1)
    if v >= s:
        return np.inf, df1, df2
    f = (2 * nn + s + 1) / (2 * mm + s + 1) * v / (s - v)
    return f, df1, df2


def manova_pillai(y, x, terms):
    """Pillai trace and F test for each non-intercept term."""
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    n, m = y.shape
    if n <= x.shape[1]:
        raise ValueError("more model columns than observations")
    hyp, e, df_e = sequential_sscp(y, x, terms)
    try:
        np.linalg.cholesky(e)
    except np.linalg.LinAlgError as exc:
        raise ValueError("residual SSCP matrix is singular") from exc
    out = []
    for label, sl in terms:
        if label == "(Intercept)":
            continue
        h = hyp[label]
        df_t = sl.stop - sl.start
        v = float(np.trace(np.linalg.solve(h + e, h)))
        f, df1, df2 = pillai_f(v, df_t, m, df_e)
        pval = 0.0 if np.isinf(f) else float(stats.f.sf(f, df1, df2))
        out.append(ManovaTermResult(label, df_t, v, float(f), float(df1), float(df2), pval))
    return out


def manova_frame(results):
    return pd.DataFrame(
        [
            {
                "term": r.term,
                "df": r.df,
                "pillai": r.pillai,
                "approx_f": r.approx_f,
                "df1": r.df1,
                "df2": r.df2,
                "p_value": r.p_value,
            }
            for r in results
        ]
    )


def effect_means(data, factors, term):
    """Cell means, counts and standard errors over the levels of ``term``.

    Means are reported for the first principal component score of ``data``
    (column ``pc1``) and for each raw column. Every level combination is
    listed; empty cells get count 0 and NaN means.
    """
    term = [term] if isinstance(term, str) else list(term)
    missing = [t for t in term if t not in factors.columns]
    if missing:
        raise ValueError(f"unknown factors: {missing}")
    data = np.asarray(data, dtype=float)
    if data.ndim == 1:
        data = data[:, None]
    cols = {f"y{j + 1}": data[:, j] for j in range(data.shape[1])}
    frame = pd.DataFrame({t: factors[t].to_numpy() for t in term})
    if data.shape[0] > data.shape[1] and np.any(data.std(axis=0) > 0):
        frame["pc1"] = pca_scores(data).scores[:, 0]
    else:
        frame["pc1"] = data[:, 0] - data[:, 0].mean()
    for k, v in cols.items():
        frame[k] = v
    values = ["pc1"] + list(cols)
    grouped = frame.groupby(term, sort=False)
    mean = grouped[values].mean()
    se = grouped[values].std(ddof=1) / np.sqrt(grouped.size().to_numpy())[:, None]
    count = grouped.size().rename("count")
    out = pd.concat([count, mean, se.add_suffix("_se")], axis=1)
    if len(term) == 1:
        full = pd.Index(_levels(factors[term[0]], term[0]), name=term[0])
    else:
        full = pd.MultiIndex.from_product([_levels(factors[t], t) for t in term], names=term)
    out = out.reindex(full)
    out["count"] = out["count"].fillna(0).astype(int)
    empty = out.index[out["count"] == 0]
    if len(empty):
        warnings.warn(f"{len(empty)} empty cells in effect table for {term}", RuntimeWarning)
    return out.reset_index()


def format_cell(value, l):
    """Table entry ``"value (l)"`` with two decimals and trailing zeros cut."""
    if not np.isfinite(value):
        return f"inf ({l})"
    txt = f"{value:.2f}".rstrip("0").rstrip(".")
    if txt == "-0":
        txt = "0"
    return f"{txt} ({l})"


def summary_table(records, design_ids=None, methods=STUDY_METHODS):
    """Minimum replicate-averaged error per design, response and method.

    Returns a wide frame with one row per (design, error kind, response) and
    one formatted ``"value (l)"`` column per method.
    """
    if design_ids is not None:
        records = records[records["design_id"].isin(list(design_ids))]
        absent = set(design_ids) - set(records["design_id"].unique())
        if absent:
            raise ValueError(f"no records for designs {sorted(absent)}")
    rows = []
    for kind, col in (("Estimation", "est_error"), ("Prediction", "pred_error")):
        avg = averaged_paths(records, col)
        for (design, resp), block in avg.groupby(["design_id", "response"], sort=True):
            row = {"design_id": design, "error": kind, "response": resp}
            for meth in methods:
                sub = block[block["method"] == meth]
                if sub.empty:
                    row[meth] = "missing"
                    continue
                path = sub.sort_values("l")
                idx = int(np.argmin(path[col].to_numpy()))
                row[meth] = format_cell(path[col].iloc[idx], int(path["l"].iloc[idx]))
            rows.append(row)
    out = pd.DataFrame(rows)
    order = {"Estimation": 0, "Prediction": 1}
    return out.sort_values(
        ["design_id", "error", "response"], key=lambda s: s.map(order) if s.name == "error" else s
    ).reset_index(drop=True)


def score_densities(scores, factors, by=("method", "gamma", "eta", "relpos"), grid_size=128):
    """Kernel density estimates of a score vector within each factor cell,
    in long format for plotting."""
    scores = np.asarray(scores, dtype=float)
    lo, hi = scores.min(), scores.max()
    pad = 0.05 * (hi - lo if hi > lo else 1.0)
    grid = np.linspace(lo - pad, hi + pad, grid_size)
    frame = factors[list(by)].copy()
    frame["score"] = scores
    rows = []
    for key, block in frame.groupby(list(by), sort=True):
        vals = block["score"].to_numpy()
        if vals.size < 2 or np.ptp(vals) == 0:
            dens = np.full(grid_size, np.nan)
        else:
            dens = stats.gaussian_kde(vals)(grid)
        key = key if isinstance(key, tuple) else (key,)
        for g, d in zip(grid, dens):
            rows.append(dict(zip(by, key), score=g, density=d))
    return pd.DataFrame(rows)
