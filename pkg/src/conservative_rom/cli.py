"""
Command-line entry point: ``consrom <verb> [options]``.

Verbs: ``mesh-info``, ``generate``, ``train``, ``evaluate``, ``diagnose``.

Settings come from built-in case defaults, then an optional INI file
(``--config``), then flags; later sources win. The experiment directory is
``--output``, else ``[run] output`` in the INI file, else
``$CONSROM_OUTPUT/<case>``, else ``./runs/<case>``. Inside it live ``data/``,
``models/`` and ``reports/``.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import logging
import os
import sys
import time
from dataclasses import replace
from pathlib import Path
from typing import Optional

import numpy as np

from .cases import CASE_NAMES, CaseConfig, Problem, default_config
from .data import generate_dataset, load_dataset
from .mesh import build_dual_graph
from .neural import TrainingDivergence
from .rom import (
    STRATEGIES, evaluate, load_model, predict_stress, save_model, spectral_radius_S0,
    train_strategy,
)

logger = logging.getLogger("conservative_rom")

OUTPUT_ENV = "CONSROM_OUTPUT"

SUMMARY_COLUMNS = ["strategy", "sigma_mre", "u_mre", "r_mre", "acv"]
SAMPLE_COLUMNS = ["sample", "sigma_re", "u_re", "r_re", "violation"]
TIMING_COLUMNS = ["strategy", "setup_s", "stress_s", "postprocess_s"]
QUIVER_COLUMNS = [
    "source", "cell", "x", "y", "u_x", "u_y", "r",
    "sigma_xx", "sigma_xy", "sigma_yx", "sigma_yy",
]
LOSS_COLUMNS = ["epoch", "loss"]

# keys of CaseConfig settable from the INI [case] section or from flags
_INT_KEYS = ("resolution", "n_train", "n_test", "pod_dim", "fourier_k", "root_count", "seed",
             "epochs")
_FLOAT_KEYS = ("learning_rate",)
_LIST_KEYS = ("lower", "upper")
# changing any of these changes the discrete problem itself
_CASE_KEYS = ("name", "resolution", "root_count", "param_names", "lower", "upper")


class CliError(Exception):
    pass


# ---------------------------------------------------------------------------
# configuration


def _read_ini(path: Optional[str]) -> configparser.ConfigParser:
    ini = configparser.ConfigParser()
    if path:
        if not Path(path).exists():
            raise CliError(f"config file {path} not found")
        ini.read(path)
    return ini


def _parse_value(key: str, raw: str):
    if key in _INT_KEYS:
        return int(raw)
    if key in _FLOAT_KEYS:
        return float(raw)
    if key in _LIST_KEYS:
        return tuple(float(v) for v in raw.replace(",", " ").split())
    return raw


def resolve_config(args: argparse.Namespace) -> tuple[CaseConfig, Path, configparser.ConfigParser]:
    ini = _read_ini(getattr(args, "config", None))
    section = ini["case"] if ini.has_section("case") else {}
    name = args.case or section.get("name") or "footing"
    if name not in CASE_NAMES:
        raise CliError(f"unknown case {name!r}; expected one of {CASE_NAMES}")
    overrides = {}
    for key in _INT_KEYS + _FLOAT_KEYS + _LIST_KEYS:
        if key in section:
            overrides[key] = _parse_value(key, section[key])
        flag = getattr(args, key, None)
        if flag is not None:
            overrides[key] = tuple(flag) if key in _LIST_KEYS else flag
    try:
        config = default_config(name, **overrides)
    except (TypeError, ValueError) as exc:
        raise CliError(f"invalid configuration: {exc}") from exc
    run = ini["run"] if ini.has_section("run") else {}
    out = getattr(args, "output", None) or run.get("output")
    if out is None:
        root = os.environ.get(OUTPUT_ENV)
        out = Path(root) / name if root else Path("runs") / name
    return config, Path(out), ini


def _explicit_training_overrides(args, ini) -> dict:
    """Training-only keys given on the command line or in the INI file."""
    section = ini["case"] if ini.has_section("case") else {}
    out = {}
    for key in ("pod_dim", "fourier_k", "epochs", "learning_rate", "seed"):
        if key in section:
            out[key] = _parse_value(key, section[key])
        if getattr(args, key, None) is not None:
            out[key] = getattr(args, key)
    return out


def _check_against_dataset(args, ini, data_config: CaseConfig) -> None:
    """Explicitly requested case keys must agree with the stored dataset."""
    section = ini["case"] if ini.has_section("case") else {}
    asked = {}
    name = args.case or section.get("name")
    if name:
        asked["name"] = name
    for key in ("resolution", "root_count", "lower", "upper"):
        if key in section:
            asked[key] = _parse_value(key, section[key])
        if getattr(args, key, None) is not None:
            val = getattr(args, key)
            asked[key] = tuple(val) if key in _LIST_KEYS else val
    for key, val in asked.items():
        if getattr(data_config, key) != val:
            raise CliError(f"{key}={val!r} differs from the dataset's {getattr(data_config, key)!r}; "
                           "regenerate the data")


def _same_case(a: CaseConfig, b: CaseConfig) -> bool:
    return all(getattr(a, k) == getattr(b, k) for k in _CASE_KEYS)


def _strategies(args, ini) -> list[str]:
    raw = args.strategy
    if raw is None and ini.has_section("run"):
        raw = ini["run"].get("strategies")
    if raw is None or raw == "all":
        return list(STRATEGIES)
    chosen = [s.strip() for s in raw.replace(",", " ").split() if s.strip()]
    bad = [s for s in chosen if s not in STRATEGIES]
    if bad:
        raise CliError(f"unknown strategy {bad[0]!r}; expected one of {STRATEGIES} or 'all'")
    return chosen


def _write_csv(path: Path, header: list[str], rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


# ---------------------------------------------------------------------------
# verbs


def cmd_mesh_info(args) -> int:
    config, _, _ = resolve_config(args)
    problem = Problem(config)
    mesh, dm, forest = problem.mesh, problem.disc.dofmap, problem.forest
    dual = build_dual_graph(mesh)
    fact = problem.tree.fact
    rows = [
        ("case", config.name),
        ("resolution", f"{config.resolution} x {config.resolution}"),
        ("h", f"{mesh.h:.6g}"),
        ("vertices", mesh.num_vertices),
        ("cells", mesh.num_cells),
        ("facets", mesh.num_facets),
        ("boundary facets", len(mesh.boundary_facets())),
        ("displacement sides", ", ".join(problem.bc.displacement)),
        ("traction sides", ", ".join(problem.bc.traction) or "-"),
        ("dual graph edges", dual.num_edges),
        ("stress dofs N_h", dm.n_sigma),
        ("displacement dofs", dm.n_u),
        ("rotation dofs", dm.n_r),
        ("forest roots", len(forest.roots)),
        ("tree edges", forest.num_tree_edges),
        ("forest depth", int(np.max(forest.depth))),
        ("min |det| of cell blocks", f"{fact.min_det:.4g}"),
    ]
    if args.spectral_radius:
        rows.append(("operator norm of S_0", f"{spectral_radius_S0(problem):.4g}"))
    width = max(len(k) for k, _ in rows)
    for k, v in rows:
        print(f"{k:<{width}}  {v}")
    return 0


def cmd_generate(args) -> int:
    config, out, ini = resolve_config(args)
    workers = args.workers
    if workers is None and ini.has_section("run"):
        workers = ini["run"].getint("workers", fallback=1)
    t0 = time.perf_counter()
    path = generate_dataset(config, out / "data", workers=workers or 1)
    print(f"wrote {config.n_train + config.n_test} samples to {path} "
          f"in {time.perf_counter() - t0:.1f} s")
    return 0


def cmd_train(args) -> int:
    config, out, ini = resolve_config(args)
    try:
        data = load_dataset(out / "data")
    except FileNotFoundError as exc:
        raise CliError(str(exc)) from exc
    _check_against_dataset(args, ini, data.config)
    train_config = replace(data.config, **_explicit_training_overrides(args, ini))
    problem = Problem(train_config)
    mus, S, _, _ = data.split(train=True)
    models = out / "models"
    models.mkdir(parents=True, exist_ok=True)
    status = 0
    for strategy in _strategies(args, ini):
        t0 = time.perf_counter()
        try:
            model = train_strategy(strategy, mus, S, problem)
        except TrainingDivergence as exc:
            _write_csv(models / f"{strategy}_loss.csv", LOSS_COLUMNS, enumerate(exc.history))
            print(f"{strategy}: {exc}", file=sys.stderr)
            status = 1
            continue
        save_model(model, models / f"{strategy}.npz")
        _write_csv(models / f"{strategy}_loss.csv", LOSS_COLUMNS, enumerate(model.history))
        print(f"{strategy}: loss {model.history[0]:.3e} -> {model.history[-1]:.3e} "
              f"in {time.perf_counter() - t0:.1f} s")
    return status


def _quiver_rows(problem: Problem, source: str, sigma, u, r):
    centers = problem.mesh.cell_centers
    vals = problem.disc.eval_at_centers(sigma)
    u = u.reshape(-1, 2)
    for c in range(problem.mesh.num_cells):
        yield [source, c, *centers[c], *u[c], r[c], *vals[c].ravel()]


def cmd_evaluate(args) -> int:
    _, out, ini = resolve_config(args)
    try:
        data = load_dataset(out / "data")
    except FileNotFoundError as exc:
        raise CliError(str(exc)) from exc
    _check_against_dataset(args, ini, data.config)
    mus, S, U, R = data.split(train=False)
    test_index = np.flatnonzero(~data.is_train)
    reports = out / "reports"
    summary, timing, quiver = [], [], []
    for strategy in _strategies(args, ini):
        path = out / "models" / f"{strategy}.npz"
        if not path.exists():
            raise CliError(f"missing model {path}; run `train` first")
        t0 = time.perf_counter()
        model = load_model(path)
        problem = model.problem
        setup = time.perf_counter() - t0
        if not _same_case(model.config, data.config):
            raise CliError(f"model {path} was trained for a different case than the dataset")
        report = evaluate(model, mus, S, U, R)
        summary.append([report.summary()[k] for k in SUMMARY_COLUMNS])
        timing.append([strategy, setup, report.timings["stress_s"], report.timings["postprocess_s"]])
        _write_csv(reports / f"samples_{strategy}.csv", SAMPLE_COLUMNS,
                   zip(test_index, report.sigma_errors, report.u_errors, report.r_errors,
                       report.violations))
        if len(mus):
            j = min(args.quiver_sample, len(mus) - 1)
            sigma = predict_stress(model, mus[j])
            u, r = problem.postprocess(sigma, mus[j])
            if not quiver:
                quiver.extend(_quiver_rows(problem, "fom", S[:, j], U[:, j], R[:, j]))
            quiver.extend(_quiver_rows(problem, strategy, sigma, u, r))
    _write_csv(reports / "summary.csv", SUMMARY_COLUMNS, summary)
    _write_csv(reports / "timing.csv", TIMING_COLUMNS, timing)
    _write_csv(reports / "quiver.csv", QUIVER_COLUMNS, quiver)
    width = max(len(c) for c in SUMMARY_COLUMNS)
    print("  ".join(f"{c:>{width}}" for c in SUMMARY_COLUMNS))
    for row in summary:
        print("  ".join(f"{row[0]:>{width}}" if i == 0 else f"{v:>{width}.3e}"
                        for i, v in enumerate(row)))
    return 0


def cmd_diagnose(args) -> int:
    from .diagnostics import run_all

    checks = run_all()
    for c in checks:
        print(c.line())
    failed = sum(not c.passed for c in checks)
    print(f"{len(checks) - failed}/{len(checks)} checks passed")
    return 1 if failed else 0


# ---------------------------------------------------------------------------


_BOX_HELP = """default parameter boxes:
  footing  g_y, f_y in [0.5, 2]; mu, lambda in [0.1, 2]
           (mu starts at 0.1 because the compliance 1/(2 mu) blows up at 0)
  hencky   alpha in [1, 2]; beta in [0, 2]; gamma, delta in [-1, 1]"""


def _add_case_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="INI file with [case] and [run] sections")
    p.add_argument("--case", choices=CASE_NAMES)
    p.add_argument("--output", help="experiment directory")
    p.add_argument("--resolution", type=int, help="cells per side of the unit square")
    p.add_argument("--root-count", dest="root_count", type=int)
    p.add_argument("--n-train", dest="n_train", type=int)
    p.add_argument("--n-test", dest="n_test", type=int)
    p.add_argument("--pod-dim", dest="pod_dim", type=int)
    p.add_argument("--fourier-k", dest="fourier_k", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--lower", type=float, nargs="+", help="parameter box lower corner")
    p.add_argument("--upper", type=float, nargs="+", help="parameter box upper corner")
    p.epilog = _BOX_HELP
    p.formatter_class = argparse.RawDescriptionHelpFormatter


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="consrom", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mesh-info", help="mesh, DOF and spanning-forest statistics")
    _add_case_options(p)
    p.add_argument("--spectral-radius", action="store_true",
                   help="also estimate the operator norm of S_0 (power iteration)")
    p.set_defaults(func=cmd_mesh_info)

    p = sub.add_parser("generate", help="sample parameters and solve the full-order model")
    _add_case_options(p)
    p.add_argument("--workers", type=int, help="worker processes for the FOM solves")
    p.set_defaults(func=cmd_generate)

    for verb, func, text in (("train", cmd_train, "train reduced models"),
                             ("evaluate", cmd_evaluate, "score models on the test split")):
        p = sub.add_parser(verb, help=text)
        _add_case_options(p)
        p.add_argument("--strategy", help=f"comma list from {', '.join(STRATEGIES)}, or 'all'")
        if verb == "evaluate":
            p.add_argument("--quiver-sample", type=int, default=0,
                           help="test sample whose fields go to quiver.csv")
        p.set_defaults(func=func)

    p = sub.add_parser("diagnose", help="run the invariant checks and print a pass/fail table")
    p.set_defaults(func=cmd_diagnose)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
