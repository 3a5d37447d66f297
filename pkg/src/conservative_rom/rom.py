"""
Reduced-order strategies for the stress and their evaluation.

    blackbox   sigma ~ Phi(mu)
    podnn      sigma ~ V phi(mu)
    split      sigma ~ V0 phi0(mu) + S_I f_mu
    corrected  sigma ~ V0 V0^T (V phi(mu) - S_I f_mu) + S_I f_mu

``V`` is a POD basis of the raw snapshots, ``V0`` one of the homogeneous
snapshots ``S_0 sigma_i``; both have the same dimension.
"""

from __future__ import annotations

import json
import logging
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from ._io import save_npz
from .cases import CaseConfig, Problem
from .neural import Layer, MlpParams, TrainConfig, FourierConfig, build_network, forward, train
from .pod import PodBasis, compute_pod

logger = logging.getLogger(__name__)

STRATEGIES = ("blackbox", "podnn", "split", "corrected")
FORMAT_TAG = "conservative-rom-model/1"


@dataclass
class RomModel:
    strategy: str
    network: MlpParams
    problem: Problem
    basis: Optional[PodBasis] = None
    basis0: Optional[PodBasis] = None
    seed: int = 0
    history: list[float] = field(default_factory=list)

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.strategy in ("split", "corrected") and self.basis0 is None:
            raise ValueError(f"{self.strategy} needs a homogeneous basis")

    @property
    def config(self) -> CaseConfig:
        return self.problem.config

    def predict_stress(self, mu: np.ndarray) -> np.ndarray:
        return predict_stress(self, mu)


def homogeneous_snapshots(problem: Problem, sigmas: np.ndarray) -> np.ndarray:
    return problem.tree.S0(sigmas)


def _kernel_pod(problem: Problem, snapshots: np.ndarray, n: int) -> PodBasis:
    """
    POD of homogeneous snapshots, with the basis pushed back into ker B.

    Trailing modes with tiny singular values are mostly roundoff, so ``V0 = Xi Z / s``
    can leave ker B by far more than machine precision. One more pass of S_0
    and a QR restore both the constraint and orthonormality.
    """
    basis = compute_pod(snapshots, n, gramian=problem.D)
    V, _ = np.linalg.qr(problem.tree.S0(basis.V))
    V *= np.sign(np.sum(V * basis.V, axis=0))
    G = V.T @ (problem.D @ V)
    return PodBasis(V, basis.singular_values, 0.5 * (G + G.T))


def correct(V0: np.ndarray, sigma: np.ndarray, particular: np.ndarray) -> np.ndarray:
    """C(sigma) = V0 V0^T (sigma - S_I f) + S_I f, columnwise."""
    return V0 @ (V0.T @ (sigma - particular)) + particular


def train_strategy(
    strategy: str,
    mus: np.ndarray,
    sigmas: np.ndarray,
    problem: Problem,
    cfg: Optional[TrainConfig] = None,
    n: Optional[int] = None,
    k: Optional[int] = None,
    latent_loss: str = "l2",
) -> RomModel:
    """
    Train one strategy.

    Args:
        strategy (str): one of ``STRATEGIES``.
        mus (np.ndarray): (N, p) training parameters.
        sigmas (np.ndarray): (N_h, N) FOM stresses, one per column.
        problem (Problem): case, operators and tree solver.
        cfg (TrainConfig): optimizer settings; defaults from the case config.
        n, k (int): POD dimension and Fourier frequency; defaults from the case.
        latent_loss (str): ``"l2"`` fits the latent coefficients in the
            Euclidean norm; ``"gramian"`` weights them with ``V^T D V`` so the
            loss measures the reconstruction in the D-norm. Ignored by the
            black-box.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")
    if latent_loss not in ("l2", "gramian"):
        raise ValueError(f"latent_loss must be 'l2' or 'gramian', got {latent_loss!r}")
    mus = np.atleast_2d(np.asarray(mus, dtype=float))
    sigmas = np.asarray(sigmas, dtype=float)
    if mus.shape[0] == 0 or sigmas.ndim != 2 or sigmas.shape[1] != mus.shape[0]:
        raise ValueError("need a non-empty snapshot set with one stress per parameter")
    conf = problem.config
    cfg = cfg or TrainConfig(learning_rate=conf.learning_rate, epochs=conf.epochs, seed=conf.seed)
    n = conf.pod_dim if n is None else n
    k = conf.fourier_k if k is None else k
    lo, hi = np.array(conf.lower), np.array(conf.upper)
    D = problem.D

    basis = basis0 = None
    if strategy in ("split", "corrected"):
        basis0 = _kernel_pod(problem, homogeneous_snapshots(problem, sigmas), n)

    if strategy == "blackbox":
        net = build_network(conf.p, k, n, cfg.seed, output_dim=sigmas.shape[0],
                            input_lo=lo, input_hi=hi)
        net, hist = train(mus, sigmas.T, net, cfg)
    else:
        if strategy == "split":
            latent_basis = basis0
            targets = basis0.project(homogeneous_snapshots(problem, sigmas))
        else:
            basis = compute_pod(sigmas, n, gramian=D)
            latent_basis = basis
            targets = basis.project(sigmas)
        net = build_network(conf.p, k, n, cfg.seed, pod_matrix=latent_basis.V,
                            input_lo=lo, input_hi=hi)
        # the l2 default fits the kernel part better, which is all the
        # corrector keeps; the Gramian spends effort on the divergence part
        weight = latent_basis.latent_gramian if latent_loss == "gramian" else None
        net, hist = train(mus, targets.T, net, cfg, weight=weight)
    return RomModel(strategy, net, problem, basis, basis0, cfg.seed, hist)


def predict_stress(model: RomModel, mu: np.ndarray) -> np.ndarray:
    """Stress coefficients at ``mu``; (N_h,) for one parameter, (N_h, N) for a batch."""
    mu = np.asarray(mu, dtype=float)
    single = mu.ndim == 1
    M = np.atleast_2d(mu)
    outside = ~model.config.in_box(M)
    if np.any(outside):
        warnings.warn(f"{int(outside.sum())} parameter(s) outside the training box; extrapolating")
    out = forward(model.network, M).T  # (N_h, N)
    if model.strategy in ("split", "corrected"):
        problem = model.problem
        particular = problem.tree.SI(problem.rhs(M))
        if model.strategy == "split":
            out = out + particular
        else:
            out = correct(model.basis0.V, out, particular)
    return out[:, 0] if single else out


def postprocess(problem: Problem, sigma: np.ndarray, mu) -> tuple[np.ndarray, np.ndarray]:
    return problem.postprocess(sigma, mu)


# ---------------------------------------------------------------------------
# metrics


@dataclass
class EvalReport:
    strategy: str
    sigma_errors: np.ndarray
    u_errors: np.ndarray
    r_errors: np.ndarray
    violations: np.ndarray
    timings: dict = field(default_factory=dict)

    @property
    def sigma_mre(self) -> float:
        return _nanmean(self.sigma_errors)

    @property
    def u_mre(self) -> float:
        return _nanmean(self.u_errors)

    @property
    def r_mre(self) -> float:
        return _nanmean(self.r_errors)

    @property
    def acv(self) -> float:
        return float(np.mean(self.violations))

    def summary(self) -> dict:
        return dict(
            strategy=self.strategy,
            sigma_mre=self.sigma_mre,
            u_mre=self.u_mre,
            r_mre=self.r_mre,
            acv=self.acv,
        )


def _nanmean(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    return float(np.mean(x[np.isfinite(x)])) if np.any(np.isfinite(x)) else float("nan")


def _relative(err: np.ndarray, ref: np.ndarray, label: str) -> np.ndarray:
    out = np.full(ref.shape, np.nan)
    ok = ref > 0
    if not np.all(ok):
        warnings.warn(f"{int((~ok).sum())} zero-norm {label} reference(s) excluded")
    out[ok] = err[ok] / ref[ok]
    return out


def constraint_violation(problem: Problem, sigma: np.ndarray, mu: np.ndarray) -> np.ndarray:
    """Per-sample ||B sigma - f_mu||_inf."""
    sigma = np.atleast_2d(sigma.T).T
    F = problem.rhs(np.atleast_2d(mu))
    return np.max(np.abs(problem.B @ sigma - F), axis=0)


def evaluate_predictions(
    problem: Problem,
    strategy: str,
    mus: np.ndarray,
    sigma_pred: np.ndarray,
    sigma_ref: np.ndarray,
    u_ref: np.ndarray,
    r_ref: np.ndarray,
    timings: Optional[dict] = None,
) -> EvalReport:
    """
    Errors of predicted stresses against FOM references (all column-stacked).
    Displacement and rotation are post-processed from the predicted stress.
    """
    disc = problem.disc
    t0 = time.perf_counter()
    u_pred, r_pred = [], []
    for j, mu in enumerate(mus):
        u, r = problem.postprocess(sigma_pred[:, j], mu)
        u_pred.append(u)
        r_pred.append(r)
    t_post = time.perf_counter() - t0
    u_pred, r_pred = np.column_stack(u_pred), np.column_stack(r_pred)
    report = EvalReport(
        strategy=strategy,
        sigma_errors=_relative(disc.sigma_norm(sigma_ref - sigma_pred), disc.sigma_norm(sigma_ref), "stress"),
        u_errors=_relative(disc.p0_norm(u_ref - u_pred, 2), disc.p0_norm(u_ref, 2), "displacement"),
        r_errors=_relative(disc.p0_norm(r_ref - r_pred, 1), disc.p0_norm(r_ref, 1), "rotation"),
        violations=constraint_violation(problem, sigma_pred, mus),
        timings=dict(timings or {}),
    )
    report.timings["postprocess_s"] = t_post
    return report


def evaluate(model: RomModel, mus, sigma_ref, u_ref, r_ref) -> EvalReport:
    """Predict, post-process and score a model on a test set."""
    mus = np.atleast_2d(np.asarray(mus, dtype=float))
    if mus.shape[0] == 0:
        raise ValueError("empty test set")
    t0 = time.perf_counter()
    sigma_pred = predict_stress(model, mus)
    t_stress = time.perf_counter() - t0
    return evaluate_predictions(
        model.problem, model.strategy, mus, sigma_pred, sigma_ref, u_ref, r_ref,
        timings={"stress_s": t_stress},
    )


def spectral_radius_S0(problem: Problem, **kw) -> float:
    """Diagnostic only: operator norm of the kernel projector."""
    return problem.tree.spectral_radius_S0(**kw)


# ---------------------------------------------------------------------------
# persistence


def save_model(model: RomModel, path) -> Path:
    """Write a single ``.npz`` holding case, bases, network, forest and seed."""
    path = Path(path)
    net = model.network
    meta = dict(
        format=FORMAT_TAG,
        strategy=model.strategy,
        seed=model.seed,
        case=model.config.to_dict(),
        fourier=None if net.fourier is None else [net.fourier.p, net.fourier.k],
        layers=[dict(activation=L.activation, trainable=L.trainable, bias=L.b is not None)
                for L in net.layers],
        roots=[list(r) for r in model.problem.forest.roots],
    )
    arrays = {"meta": np.array(json.dumps(meta, sort_keys=True))}
    for i, L in enumerate(net.layers):
        arrays[f"layer{i}_W"] = L.W
        if L.b is not None:
            arrays[f"layer{i}_b"] = L.b
    for key, val in (("input_lo", net.input_lo), ("input_hi", net.input_hi)):
        if val is not None:
            arrays[key] = val
    for tag, b in (("V", model.basis), ("V0", model.basis0)):
        if b is not None:
            arrays[f"{tag}"] = b.V
            arrays[f"{tag}_sv"] = b.singular_values
            arrays[f"{tag}_gram"] = b.latent_gramian
    arrays["output_scale"] = np.broadcast_to(net.output_scale, (net.latent().layers[-1].W.shape[0],))
    arrays["output_shift"] = np.broadcast_to(net.output_shift, arrays["output_scale"].shape)
    arrays["history"] = np.asarray(model.history)
    arrays["tree_facet"] = model.problem.forest.tree_facet
    return save_npz(path, **arrays)


def load_model(path, problem: Optional[Problem] = None) -> RomModel:
    with np.load(Path(path), allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        if meta.get("format") != FORMAT_TAG:
            raise ValueError(f"unsupported model format {meta.get('format')!r}")
        config = CaseConfig.from_dict(meta["case"])
        if problem is None:
            problem = Problem(config)
        elif problem.config != config:
            raise ValueError("model was trained for a different case configuration")
        if not np.array_equal(problem.forest.tree_facet, data["tree_facet"]):
            raise ValueError("stored forest does not match the rebuilt one")
        layers = []
        for i, spec in enumerate(meta["layers"]):
            b = data[f"layer{i}_b"] if spec["bias"] else None
            layers.append(Layer(data[f"layer{i}_W"].copy(), None if b is None else b.copy(),
                                spec["activation"], spec["trainable"]))
        fourier = None if meta["fourier"] is None else FourierConfig(*meta["fourier"])
        net = MlpParams(
            layers, fourier,
            data["input_lo"].copy() if "input_lo" in data else None,
            data["input_hi"].copy() if "input_hi" in data else None,
            data["output_scale"].copy(),
            data["output_shift"].copy(),
        )
        bases = {}
        for tag in ("V", "V0"):
            if tag in data:
                bases[tag] = PodBasis(data[tag].copy(), data[f"{tag}_sv"].copy(),
                                      data[f"{tag}_gram"].copy())
        history = data["history"].tolist()
    return RomModel(meta["strategy"], net, problem, bases.get("V"), bases.get("V0"),
                    meta["seed"], history)
