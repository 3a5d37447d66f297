"""
Snapshot datasets on disk.

A dataset directory holds ``meta.json`` (format tag and case configuration),
``parameters.csv`` (one row per sample) and ``sample_XXXX.npz`` files with the
FOM stress, displacement and rotation coefficients.
"""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from ._io import save_npz
from .cases import CaseConfig, Problem
from .fom import SolverError

logger = logging.getLogger(__name__)

DATA_FORMAT = "conservative-rom-data/1"
MAX_RETRIES = 3


@dataclass
class Dataset:
    config: CaseConfig
    mus: np.ndarray  # (N, p)
    sigma: np.ndarray  # (N_h, N)
    u: np.ndarray
    r: np.ndarray
    is_train: np.ndarray  # (N,) bool

    def split(self, train: bool) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        m = self.is_train if train else ~self.is_train
        return self.mus[m], self.sigma[:, m], self.u[:, m], self.r[:, m]


_worker_problem: Optional[Problem] = None


def _init_worker(config_dict: dict) -> None:
    global _worker_problem
    _worker_problem = Problem(CaseConfig.from_dict(config_dict))


def _solve_with_retries(problem: Problem, index: int, mu: np.ndarray) -> dict:
    """FOM at ``mu``; on failure redraw the sample from a seed tied to its index."""
    config = problem.config
    tried = []
    for attempt in range(MAX_RETRIES + 1):
        try:
            sol = problem.solve(mu)
        except SolverError as exc:
            logger.warning("sample %d failed at %s: %s", index, mu, exc)
            tried.append(mu.tolist())
            rng = np.random.default_rng([config.seed, index, attempt + 1])
            lo, hi = np.array(config.lower), np.array(config.upper)
            mu = lo + (hi - lo) * rng.random(config.p)
            continue
        residual = float(np.max(np.abs(problem.B @ sol.sigma - problem.rhs(mu))))
        return dict(
            index=index, mu=mu, sigma=sol.sigma, u=sol.u, r=sol.r,
            iterations=sol.iterations, residual=residual, failed=tried,
        )
    raise SolverError(f"sample {index}: FOM failed {MAX_RETRIES + 1} times, last at {tried[-1]}")


def _solve_in_worker(args) -> dict:
    return _solve_with_retries(_worker_problem, *args)


def generate_dataset(
    config: CaseConfig,
    outdir,
    workers: int = 1,
    problem: Optional[Problem] = None,
) -> Path:
    """
    Sample ``n_train + n_test`` parameters with ``config.seed``, solve the FOM
    for each and write the dataset. The first ``n_train`` samples form the
    training split. Results do not depend on ``workers``.
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    n = config.n_train + config.n_test
    mus = config.sample(n, config.seed)
    jobs = list(enumerate(mus))
    if workers > 1:
        with ProcessPoolExecutor(workers, initializer=_init_worker,
                                 initargs=(config.to_dict(),)) as pool:
            results = list(pool.map(_solve_in_worker, jobs))
    else:
        problem = problem or Problem(config)
        results = [_solve_with_retries(problem, i, mu) for i, mu in jobs]
    results.sort(key=lambda d: d["index"])

    with open(outdir / "parameters.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample", "split", *config.param_names, "iterations", "residual"])
        for d in results:
            split = "train" if d["index"] < config.n_train else "test"
            w.writerow([d["index"], split, *map(repr, map(float, d["mu"])), d["iterations"],
                        repr(d["residual"])])
    for d in results:
        save_npz(outdir / f"sample_{d['index']:04d}.npz",
                 mu=d["mu"], sigma=d["sigma"], u=d["u"], r=d["r"])
    meta = dict(
        format=DATA_FORMAT,
        case=config.to_dict(),
        resampled={str(d["index"]): d["failed"] for d in results if d["failed"]},
    )
    (outdir / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return outdir


def load_dataset(outdir) -> Dataset:
    outdir = Path(outdir)
    meta_path = outdir / "meta.json"
    if not meta_path.exists():
        raise FileNotFoundError(f"no dataset in {outdir} (missing meta.json); run `generate` first")
    meta = json.loads(meta_path.read_text())
    if meta.get("format") != DATA_FORMAT:
        raise ValueError(f"unsupported dataset format {meta.get('format')!r}")
    config = CaseConfig.from_dict(meta["case"])
    with open(outdir / "parameters.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    mus, S, U, R, train = [], [], [], [], []
    for row in rows:
        with np.load(outdir / f"sample_{int(row['sample']):04d}.npz") as d:
            mus.append(d["mu"])
            S.append(d["sigma"])
            U.append(d["u"])
            R.append(d["r"])
        train.append(row["split"] == "train")
    return Dataset(config, np.array(mus), np.column_stack(S), np.column_stack(U),
                   np.column_stack(R), np.array(train))
