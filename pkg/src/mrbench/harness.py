"""Factorial study runner: deterministic seeding, per-task result files,
process-pool execution, resumable merges."""
from __future__ import annotations

import concurrent.futures as cf
import dataclasses
import hashlib
import json
import logging
import os
import platform
import time
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .estimators import ALL_METHODS, STUDY_METHODS, fit_method
from .io import read_csv, write_csv
from .metrics import assemble_component_dataset, assemble_error_dataset, path_errors, records_frame
from .simulation import SimDesign, assemble_population, design_grid, sample_dataset

log = logging.getLogger(__name__)

POPULATION = "POPULATION"
SHARED = "SHARED"
SEED_SALTS = (POPULATION, SHARED) + ALL_METHODS


def derive_seed(base_seed: int, design_id: int, method: str, replicate: int) -> int:
    """Stable 63-bit seed from the task identity."""
    key = f"{int(base_seed)}|{int(design_id)}|{method}|{int(replicate)}".encode()
    digest = hashlib.blake2b(key, digest_size=8).digest()
    return int.from_bytes(digest, "little") >> 1


@dataclass
class RunConfig:
    designs: tuple = tuple(range(1, 33))
    replicates: int = 50
    methods: tuple = STUDY_METHODS
    lmax: int = 10
    senv_response_dim: int = 2
    base_seed: int = 1
    share_datasets_across_methods: bool = False
    parallel_width: int = 1
    output_dir: str = "results"
    var_cap: float = 0.995

    def __post_init__(self):
        self.designs = tuple(sorted(set(int(d) for d in self.designs)))
        self.methods = tuple(m.upper() for m in self.methods)
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if self.lmax < 1:
            raise ValueError("lmax must be >= 1")
        if self.parallel_width < 1:
            raise ValueError("parallel_width must be >= 1")
        known = {d.design_id for d in design_grid()}
        bad = [d for d in self.designs if d not in known]
        if bad or not self.designs:
            raise ValueError(f"unknown designs: {bad or 'none selected'}")
        badm = [m for m in self.methods if m not in ALL_METHODS]
        if badm or not self.methods:
            raise ValueError(f"unknown methods: {badm or 'none selected'}")

    def tasks(self):
        order = {m: i for i, m in enumerate(ALL_METHODS)}
        methods = sorted(self.methods, key=order.get)
        return [
            (d, m, r)
            for d in self.designs
            for m in methods
            for r in range(1, self.replicates + 1)
        ]

    def study_key(self):
        """Fields that change results; a resume must match these."""
        d = dataclasses.asdict(self)
        for k in ("parallel_width", "output_dir", "designs", "replicates", "methods"):
            d.pop(k)
        return d


@lru_cache(maxsize=64)
def population_for(design_id: int, base_seed: int):
    design = next(d for d in design_grid(base_seed) if d.design_id == design_id)
    rng = np.random.default_rng(derive_seed(base_seed, design_id, POPULATION, 0))
    return assemble_population(design, rng)


def dataset_seed(config: RunConfig, design_id, method, replicate):
    salt = SHARED if config.share_datasets_across_methods else method
    return derive_seed(config.base_seed, design_id, salt, replicate)


def draw_dataset(config: RunConfig, design_id, method, replicate):
    pop = population_for(design_id, config.base_seed)
    seed = dataset_seed(config, design_id, method, replicate)
    ds = sample_dataset(
        pop,
        pop.design.n,
        np.random.default_rng(seed),
        design_id=design_id,
        method=method,
        replicate=replicate,
        seed=seed,
    )
    return pop, ds


def run_task(config: RunConfig, task):
    """Simulate, fit and score one (design, method, replicate)."""
    design_id, method, replicate = task
    pop, ds = draw_dataset(config, design_id, method, replicate)
    path = fit_method(
        method, ds.x, ds.y, lmax=config.lmax, senv_response_dim=config.senv_response_dim,
        var_cap=config.var_cap,
    )
    est, pred = path_errors(path, pop)
    rows = []
    for j in range(est.shape[1]):
        for l in range(est.shape[0]):
            rows.append((design_id, method, replicate, j + 1, l, est[l, j], pred[l, j]))
    return rows, path.notes


def task_file(out: Path, task) -> Path:
    d, m, r = task
    return out / "tasks" / f"d{d:02d}_{m}_r{r:03d}.csv"


def _write_task(out: Path, task, rows):
    target = task_file(out, task)
    frame = pd.DataFrame(rows, columns=["design_id", "method", "replicate", "response", "l", "est_error", "pred_error"])
    write_csv(frame, target, "records")


def _worker_init():
    try:
        from threadpoolctl import threadpool_limits

        threadpool_limits(1)
    except ImportError:  # pragma: no cover
        pass


def _worker(args):
    config, out, task = args
    try:
        rows, notes = run_task(config, task)
        _write_task(Path(out), task, rows)
        return task, "done", notes
    except Exception as exc:  # recorded in the manifest
        return task, "failed", [f"{type(exc).__name__}: {exc}"]


def _manifest_path(out: Path) -> Path:
    return out / "manifest.json"


def load_manifest(out) -> dict | None:
    path = _manifest_path(Path(out))
    if not path.exists():
        return None
    return json.loads(path.read_text())


def _save_manifest(out: Path, manifest):
    tmp = _manifest_path(out).with_suffix(".tmp")
    tmp.write_text(json.dumps(manifest, indent=1, sort_keys=True))
    os.replace(tmp, _manifest_path(out))


def _task_id(task):
    return f"{task[0]}/{task[1]}/{task[2]}"


def execute_tasks(config: RunConfig, resume=True, progress=None):
    """Run every task of ``config`` not already on disk; returns the manifest."""
    out = Path(config.output_dir)
    (out / "tasks").mkdir(parents=True, exist_ok=True)
    manifest = load_manifest(out) if resume else None
    if manifest and manifest.get("study") != _jsonable(config.study_key()):
        raise ValueError(f"{out} holds results from a different study configuration")
    if not manifest:
        manifest = {"study": _jsonable(config.study_key()), "tasks": {}}
    manifest.update(
        config=_jsonable(dataclasses.asdict(config)),
        version=__version__,
        python=platform.python_version(),
        numpy=np.__version__,
    )
    tasks = config.tasks()
    todo = []
    for t in tasks:
        entry = manifest["tasks"].get(_task_id(t))
        if entry and entry.get("status") == "done" and task_file(out, t).exists():
            continue
        todo.append(t)
    for t in tasks:
        manifest["tasks"].setdefault(
            _task_id(t),
            {"status": "pending", "seed": dataset_seed(config, *t)},
        )
    manifest["started"] = time.strftime("%Y-%m-%dT%H:%M:%S")
    _save_manifest(out, manifest)
    log.info("%d tasks, %d to run", len(tasks), len(todo))

    def record(result):
        task, status, notes = result
        entry = manifest["tasks"][_task_id(task)]
        entry["status"] = status
        entry["notes"] = notes
        if progress:
            progress(task, status)

    args = [(config, str(out), t) for t in todo]
    t0 = time.time()
    if config.parallel_width == 1:
        _worker_init()
        for i, a in enumerate(args):
            record(_worker(a))
            if (i + 1) % 50 == 0:
                _save_manifest(out, manifest)
    else:
        with cf.ProcessPoolExecutor(config.parallel_width, initializer=_worker_init) as pool:
            for i, res in enumerate(pool.map(_worker, args, chunksize=4)):
                record(res)
                if (i + 1) % 50 == 0:
                    _save_manifest(out, manifest)
    manifest["finished"] = time.strftime("%Y-%m-%dT%H:%M:%S")
    manifest["elapsed_seconds"] = round(time.time() - t0, 3)
    _save_manifest(out, manifest)
    return manifest


def _jsonable(obj):
    return json.loads(json.dumps(obj, default=list))


def design_key_frame(design_ids=None, base_seed=0):
    rows = [
        {"design_id": d.design_id, "p": d.p, "gamma": d.gamma, "eta": d.eta, "relpos": d.relpos_label}
        for d in design_grid(base_seed)
        if design_ids is None or d.design_id in design_ids
    ]
    return pd.DataFrame(rows)


def merge_results(config: RunConfig):
    """Collect task files in key order and write records, u, v and the key."""
    out = Path(config.output_dir)
    frames = []
    missing = []
    for t in config.tasks():
        path = task_file(out, t)
        if not path.exists():
            missing.append(_task_id(t))
            continue
        frames.append(read_csv(path, "records"))
    if missing:
        raise RuntimeError(f"{len(missing)} tasks have no results, e.g. {missing[:5]}")
    records = records_frame(pd.concat(frames, ignore_index=True))
    u = assemble_error_dataset(records)
    v = assemble_component_dataset(records)
    write_csv(records, out / "records.csv", "records")
    write_csv(u.frame, out / "u.csv", "error-dataset")
    write_csv(v.frame, out / "v.csv", "component-dataset")
    write_csv(design_key_frame(set(config.designs)), out / "design_key.csv", "design-key")
    return records, u, v


@dataclass
class StudyResult:
    records: pd.DataFrame
    u: object
    v: object
    manifest: dict = field(default_factory=dict)


def run_study(config: RunConfig, resume=True, progress=None) -> StudyResult:
    manifest = execute_tasks(config, resume=resume, progress=progress)
    failed = [k for k, v in manifest["tasks"].items() if v["status"] == "failed"]
    if failed:
        raise RuntimeError(f"{len(failed)} tasks failed, e.g. {failed[0]}: {manifest['tasks'][failed[0]]['notes']}")
    records, u, v = merge_results(config)
    return StudyResult(records, u, v, manifest)
