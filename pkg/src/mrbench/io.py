"""CSV and plain-text persistence with a versioned schema line."""
from __future__ import annotations

import io
import os
from pathlib import Path

import numpy as np
import pandas as pd

SCHEMA_VERSION = 1
FLOAT_FORMAT = "%.17g"


def write_csv(frame: pd.DataFrame, path, schema: str):
    """Write ``frame`` with a leading ``# schema: <name>/<version>`` line.

    Floats use 17 significant digits so values round-trip exactly; the file
    is written to a temporary name and renamed into place.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    buf.write(f"# schema: {schema}/{SCHEMA_VERSION}\n")
    frame.to_csv(buf, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(buf.getvalue())
    os.replace(tmp, path)


def read_csv(path, schema: str | None = None) -> pd.DataFrame:
    path = Path(path)
    with path.open() as fh:
        first = fh.readline().strip()
    if not first.startswith("# schema:"):
        raise ValueError(f"{path} has no schema line")
    name, _, version = first.split(":", 1)[1].strip().partition("/")
    if schema is not None and name != schema:
        raise ValueError(f"{path} holds {name!r}, expected {schema!r}")
    if int(version) > SCHEMA_VERSION:
        raise ValueError(f"{path} uses a newer schema version {version}")
    return pd.read_csv(path, skiprows=1)


def write_dataset_csv(ds, path):
    cols = [f"y{j + 1}" for j in range(ds.y.shape[1])] + [f"x{i + 1}" for i in range(ds.x.shape[1])]
    frame = pd.DataFrame(np.hstack([ds.y, ds.x]), columns=cols)
    write_csv(frame, path, "dataset")


def read_dataset_csv(path):
    frame = read_csv(path, "dataset")
    y = frame[[c for c in frame.columns if c.startswith("y")]].to_numpy()
    x = frame[[c for c in frame.columns if c.startswith("x")]].to_numpy()
    return x, y


POPULATION_BLOCKS = (
    "lambda",
    "kappa",
    "sigma_zw",
    "rot_x",
    "rot_y",
    "sigma_xx",
    "sigma_xy",
    "sigma_yy",
    "beta_true",
    "sigma2_y",
    "sigma2_eps",
)


def write_population(model, path):
    """Plain-text matrix container: ``@ name rows cols`` then the rows."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    d = model.design
    lines = [
        f"# population design_id={d.design_id} p={d.p} gamma={d.gamma} eta={d.eta} "
        f"relpos={d.relpos_label} n={d.n} m={d.m} r2={d.r2}"
    ]
    values = {
        "lambda": model.lam,
        "kappa": model.kappa,
        "sigma_zw": model.sigma_zw,
        "rot_x": model.rot_x,
        "rot_y": model.rot_y,
        "sigma_xx": model.sigma_xx,
        "sigma_xy": model.sigma_xy,
        "sigma_yy": model.sigma_yy,
        "beta_true": model.beta_true,
        "sigma2_y": model.sigma2_y,
        "sigma2_eps": model.sigma2_eps,
    }
    for name in POPULATION_BLOCKS:
        arr = np.atleast_2d(values[name])
        if values[name].ndim == 1:
            arr = arr.T
        lines.append(f"@ {name} {arr.shape[0]} {arr.shape[1]}")
        lines.extend(" ".join(FLOAT_FORMAT % v for v in row) for row in arr)
    path.write_text("\n".join(lines) + "\n")


def read_population(path) -> dict:
    """Blocks of a population file as arrays (vectors come back 1-D)."""
    out = {}
    lines = Path(path).read_text().splitlines()
    i = 0
    while i < len(lines):
        line = lines[i]
        if line.startswith("@"):
            _, name, r, c = line.split()
            r, c = int(r), int(c)
            arr = np.array([[float(v) for v in lines[i + 1 + k].split()] for k in range(r)])
            out[name] = arr[:, 0] if c == 1 and name in ("lambda", "kappa", "sigma2_y", "sigma2_eps") else arr
            i += r + 1
        else:
            i += 1
    return out


def write_path_csv(path_obj, path, design_id, method, replicate):
    """Long-format coefficient path export."""
    coef = path_obj.coef
    lm1, p, m = coef.shape
    l_idx, pred_idx, resp_idx = np.meshgrid(np.arange(lm1), np.arange(p), np.arange(m), indexing="ij")
    frame = pd.DataFrame(
        {
            "design_id": design_id,
            "method": method,
            "replicate": replicate,
            "l": l_idx.ravel(),
            "response": resp_idx.ravel() + 1,
            "predictor": pred_idx.ravel() + 1,
            "coefficient": coef.ravel(),
        }
    )
    write_csv(frame, path, "coefficient-path")
