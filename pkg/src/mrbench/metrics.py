"""Scaled estimation/prediction errors and the error and component datasets."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

KEYS = ["design_id", "method", "replicate"]


def estimation_error(beta_true, beta_hat, sigma2_y):
    """Squared coefficient error scaled by the response variance."""
    if sigma2_y <= 0:
        raise ValueError("response variance must be positive")
    beta_true = np.asarray(beta_true, dtype=float)
    beta_hat = np.asarray(beta_hat, dtype=float)
    if beta_true.shape != beta_hat.shape:
        raise ValueError("coefficient vectors differ in length")
    if not np.all(np.isfinite(beta_hat)):
        return np.inf
    d = beta_true - beta_hat
    return float(d @ d / sigma2_y)


def prediction_error(beta_true, beta_hat, sigma_xx, sigma2_eps):
    """Expected squared prediction error at a fresh x, scaled by the error
    variance; equals 1 for the true coefficients."""
    if sigma2_eps <= 0:
        raise ValueError("error variance must be positive")
    beta_hat = np.asarray(beta_hat, dtype=float)
    if not np.all(np.isfinite(beta_hat)):
        return np.inf
    d = beta_hat - np.asarray(beta_true, dtype=float)
    return float((d @ np.asarray(sigma_xx) @ d + sigma2_eps) / sigma2_eps)


def path_errors(path, model):
    """Per-(l, response) estimation and prediction errors of a coefficient path.

    Returns two arrays of shape ``(lmax + 1, m)``; failed fits give ``inf``.
    """
    coef = path.coef
    lm1, _, m = coef.shape
    est = np.empty((lm1, m))
    pred = np.empty((lm1, m))
    diff = coef - model.beta_true[None]
    ok = np.all(np.isfinite(coef), axis=1)  # (l, m)
    with np.errstate(invalid="ignore"):
        est[:] = np.einsum("lpm,lpm->lm", diff, diff) / model.sigma2_y
        quad = np.einsum("lpm,pq,lqm->lm", diff, model.sigma_xx, diff)
    pred[:] = (quad + model.sigma2_eps) / model.sigma2_eps
    est[~ok] = np.inf
    pred[~ok] = np.inf
    return est, pred


def average_error_path(errors):
    """Mean over replicates (axis 0) for each component count."""
    errors = np.asarray(errors, dtype=float)
    if errors.size == 0 or errors.shape[0] == 0:
        raise ValueError("no replicates to average")
    return errors.mean(axis=0)


def select_common_component(avg_path):
    """Index of the smallest averaged error, ties going to fewer components."""
    avg_path = np.asarray(avg_path, dtype=float)
    if np.any(np.isnan(avg_path)):
        raise ValueError("error path contains NaN")
    return int(np.argmin(avg_path))


def select_per_replicate_component(path):
    return select_common_component(path)


@dataclass
class ErrorTable:
    """Wide table keyed by (design_id, method, replicate) with one column per
    response; used for both the error dataset ``u`` and component dataset ``v``."""

    frame: pd.DataFrame
    prefix: str

    @property
    def values(self):
        return self.frame[self.columns].to_numpy()

    @property
    def columns(self):
        return [c for c in self.frame.columns if c.startswith(self.prefix) and c[len(self.prefix) :].isdigit()]

    def __len__(self):
        return len(self.frame)


def records_frame(rows):
    """Long-format records as a sorted DataFrame."""
    df = pd.DataFrame(rows, columns=KEYS + ["response", "l", "est_error", "pred_error"])
    return df.sort_values(KEYS + ["response", "l"], kind="mergesort").reset_index(drop=True)


def _check_complete(records):
    keys = records[KEYS].drop_duplicates()
    ls = np.sort(records["l"].unique())
    resp = np.sort(records["response"].unique())
    expected = len(keys) * len(ls) * len(resp)
    missing = []
    if len(records) != expected or records.duplicated(KEYS + ["response", "l"]).any():
        grid = keys.merge(pd.DataFrame({"response": resp}), how="cross").merge(
            pd.DataFrame({"l": ls}), how="cross"
        )
        have = records[KEYS + ["response", "l"]].drop_duplicates()
        merged = grid.merge(have, how="left", indicator=True)
        missing = merged[merged["_merge"] == "left_only"].drop(columns="_merge")
        if len(missing) or records.duplicated(KEYS + ["response", "l"]).any():
            listing = missing.head(20).to_string(index=False) if len(missing) else "duplicates"
            raise ValueError(f"incomplete record set ({len(missing)} missing cells):\n{listing}")
    # every (design, method) cell must carry the same replicate set
    reps = records.groupby(["design_id", "method"])["replicate"].nunique()
    if reps.nunique() > 1:
        raise ValueError("unequal replicate counts across design/method cells")


def _sorted(records):
    if not isinstance(records, pd.DataFrame):
        records = records_frame(records)
    return records.sort_values(KEYS + ["response", "l"], kind="mergesort").reset_index(drop=True)


def _cube(records, value):
    """Array (cells, replicates, l, responses) with the matching key frame."""
    records = _sorted(records)
    _check_complete(records)
    nl = records["l"].nunique()
    nr = records["response"].nunique()
    keys = records[KEYS].drop_duplicates().reset_index(drop=True)
    nrep = keys.groupby(["design_id", "method"]).size().iloc[0]
    vals = records[value].to_numpy().reshape(len(keys) // nrep, nrep, nr, nl)
    return keys, vals.transpose(0, 1, 3, 2)


def assemble_error_dataset(records, value="est_error"):
    """Per-replicate errors at the component count minimizing the
    replicate-averaged error of each (design, method, response)."""
    keys, cube = _cube(records, value)
    ncell, nrep, nl, nr = cube.shape
    out = np.empty((ncell, nrep, nr))
    for c in range(ncell):
        avg = average_error_path(cube[c])  # (l, responses)
        for j in range(nr):
            lo = select_common_component(avg[:, j])
            out[c, :, j] = cube[c, :, lo, j]
    frame = keys.copy()
    for j in range(nr):
        frame[f"u{j + 1}"] = out[:, :, j].reshape(-1)
    return ErrorTable(frame, "u")


def assemble_component_dataset(records, value="est_error"):
    """Per-replicate component counts minimizing that replicate's error."""
    keys, cube = _cube(records, value)
    ncell, nrep, nl, nr = cube.shape
    out = np.empty((ncell, nrep, nr), dtype=int)
    for c in range(ncell):
        for r in range(nrep):
            for j in range(nr):
                out[c, r, j] = select_per_replicate_component(cube[c, r, :, j])
    frame = keys.copy()
    for j in range(nr):
        frame[f"v{j + 1}"] = out[:, :, j].reshape(-1)
    return ErrorTable(frame, "v")


def averaged_paths(records, value):
    """Replicate-averaged error per (design, method, response, l)."""
    records = _sorted(records)
    return (
        records.groupby(["design_id", "method", "response", "l"], sort=True)[value]
        .mean()
        .reset_index()
    )
