"""
Self-checks of the structural invariants, small enough to run in seconds.

Each check returns a :class:`Check`; :func:`run_all` collects them for the
``diagnose`` command.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .cases import Problem, default_config
from .fem import BoundarySpec, Discretization, HenckyVonMises
from .fom import solve_hencky, solve_linear
from .mesh import build_structured_unit_square
from .neural import build_network, loss_and_grad, _features
from .pod import compute_pod
from .tree import TreeSolver, build_forest


@dataclass
class Check:
    name: str
    value: float
    tol: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.value) and self.value <= self.tol)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name:<28s} {self.value:10.3e}  (tol {self.tol:.0e})"


def _tree(n: int, roots: int = 1, bc: BoundarySpec | None = None):
    mesh = build_structured_unit_square(n, n)
    bc = bc or BoundarySpec(("bottom", "top", "left", "right"))
    disc = Discretization(mesh, bc)
    return disc, TreeSolver(disc.B, disc.dofmap, build_forest(mesh, bc, roots))


def right_inverse_defect(sizes=(2, 3, 5, 8, 12), samples: int = 100, seed: int = 0) -> float:
    """max ||B S_I f - f||_inf / ||f||_inf over random f."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for n in sizes:
        disc, tree = _tree(n, roots=1 + n % 3)
        F = rng.standard_normal((disc.B.shape[0], samples))
        res = np.abs(disc.B @ tree.SI(F) - F).max(axis=0) / np.abs(F).max(axis=0)
        worst = max(worst, float(res.max()))
    return worst


def kernel_defect(sizes=(2, 3, 5, 8, 12), samples: int = 100, seed: int = 0) -> float:
    """max ||B S_0 sigma||_inf / ||sigma||_inf over random sigma."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for n in sizes:
        disc, tree = _tree(n, roots=1 + n % 3)
        S = rng.standard_normal((disc.B.shape[1], samples))
        res = np.abs(disc.B @ tree.S0(S)).max(axis=0) / np.abs(S).max(axis=0)
        worst = max(worst, float(res.max()))
    return worst


def adjoint_defect(n: int = 6, seed: int = 0) -> float:
    """|<S_I f, g> - <f, S_I^T g>|, relative to |S_I f| |g|."""
    rng = np.random.default_rng(seed)
    disc, tree = _tree(n, roots=2)
    f = rng.standard_normal(disc.B.shape[0])
    g = rng.standard_normal(disc.B.shape[1])
    lhs, rhs = tree.SI(f) @ g, f @ tree.SI_adjoint(g)
    return float(abs(lhs - rhs) / (np.linalg.norm(tree.SI(f)) * np.linalg.norm(g)))


def patch_test_defect(mu: float = 0.7, lam: float = 1.3, seed: int = 0) -> float:
    """
    A linear displacement with constant Lame parameters and no body force is
    reproduced exactly: constant stress, cell-center displacement, skew part.
    """
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((2, 2))
    mesh = build_structured_unit_square(4, 3)
    disc = Discretization(mesh, BoundarySpec(("bottom", "top", "left", "right")))
    sol = solve_linear(disc.assemble(mu, lam, None, lambda x: x @ G.T))
    eps = 0.5 * (G + G.T)
    sig = 2 * mu * eps + lam * np.trace(eps) * np.eye(2)
    exact = disc.interpolate(lambda x: np.broadcast_to(sig, (len(x), 2, 2)))
    u_exact = (mesh.cell_centers @ G.T).ravel()
    r_exact = np.full(mesh.num_cells, 0.5 * (G[0, 1] - G[1, 0]))
    return float(max(
        np.abs(sol.sigma - exact).max() / np.abs(exact).max(),
        np.abs(sol.u - u_exact).max() / np.abs(u_exact).max(),
        np.abs(sol.r - r_exact).max() / max(abs(r_exact[0]), 1e-300),
    ))


def postprocess_defect(draws: int = 20, resolution: int = 10, seed: int = 0) -> float:
    """Relative error of (u, r) recovered from the FOM stress by S_I^T."""
    problem = Problem(default_config("footing", resolution=resolution))
    worst = 0.0
    for mu in problem.config.sample(draws, seed):
        sol = problem.solve(mu)
        u, r = problem.postprocess(sol.sigma, mu)
        ref = np.concatenate([sol.u, sol.r])
        err = np.concatenate([u - sol.u, r - sol.r])
        worst = max(worst, float(np.linalg.norm(err) / np.linalg.norm(ref)))
    return worst


def hencky_degenerate_defect(alpha: float = 1.4, n: int = 6) -> float:
    """
    With beta = 2 the law is linear (mu = 2, lam = 0). Returns the stress
    mismatch against the direct solve, or inf if the iteration took more than
    one correction step.
    """
    disc = Discretization(build_structured_unit_square(n, n),
                          BoundarySpec(("bottom", "top", "left", "right")))
    f_u = lambda x: np.column_stack([np.sin(3 * x[:, 1]), x[:, 0] ** 2])  # noqa: E731
    g_u = lambda x: 0.1 * x * (1 - x)  # noqa: E731
    it = solve_hencky(disc, HenckyVonMises(alpha, 2.0), f_u, g_u)
    lin = solve_linear(disc.assemble(2.0, 0.0, f_u, g_u))
    if it.iterations != 1:
        return float("inf")
    return float(np.abs(it.sigma - lin.sigma).max() / np.abs(lin.sigma).max())


def gradient_check_error(seed: int = 0, step: float = 1e-5, floor: float = 1e-4) -> float:
    """
    Largest relative gap between analytic and central-difference gradients on
    a toy network, over every trainable parameter.

    Components smaller than ``floor`` are compared against ``floor`` instead of
    their own size: at ``step = 1e-5`` the difference quotient carries about
    1e-10 of roundoff, which would swamp the relative error of a 1e-6 entry.
    """
    rng = np.random.default_rng(seed)
    net = build_network(2, 1, 3, seed, output_dim=4)
    for L in net.layers:
        if L.b is not None:
            L.b[:] = 0.1 * rng.standard_normal(L.b.shape)
    X = _features(net, rng.uniform(-1, 1, (5, 2)))
    Y = rng.standard_normal((5, 4))
    Wt = rng.standard_normal((4, 4))
    Wt = Wt @ Wt.T + np.eye(4)
    layers = net.trainable_layers()
    _, grads = loss_and_grad(layers, X, Y, Wt)
    worst = 0.0
    for L, (gW, gb) in zip(layers, grads):
        for arr, g in ((L.W, gW), (L.b, gb)):
            if arr is None:
                continue
            for idx in np.ndindex(arr.shape):
                old = arr[idx]
                arr[idx] = old + step
                lp, _ = loss_and_grad(layers, X, Y, Wt)
                arr[idx] = old - step
                lm, _ = loss_and_grad(layers, X, Y, Wt)
                arr[idx] = old
                fd = (lp - lm) / (2 * step)
                worst = max(worst, abs(fd - g[idx]) / max(abs(fd), abs(g[idx]), floor))
    return float(worst)


def pod_homogeneity_defect(n: int = 6, samples: int = 12, dim: int = 5, seed: int = 0) -> float:
    """max ||B v||_inf over the POD basis of random homogeneous snapshots."""
    rng = np.random.default_rng(seed)
    disc, tree = _tree(n, roots=2)
    H = tree.S0(rng.standard_normal((disc.B.shape[1], samples)))
    basis = compute_pod(H, dim)
    return float(np.abs(disc.B @ basis.V).max())


CHECKS: dict[str, tuple[Callable[[], float], float]] = {
    "right inverse B S_I = I": (right_inverse_defect, 1e-12),
    "kernel B S_0 = 0": (kernel_defect, 1e-12),
    "adjoint S_I^T": (adjoint_defect, 1e-12),
    "linear patch test": (patch_test_defect, 1e-10),
    "post-processing round trip": (lambda: postprocess_defect(draws=5), 1e-10),
    "Hencky beta=2 limit": (hencky_degenerate_defect, 1e-12),
    "network gradient": (gradient_check_error, 1e-5),
    "POD of kernel snapshots": (pod_homogeneity_defect, 1e-11),
}


def run_all() -> list[Check]:
    return [Check(name, float(fn()), tol) for name, (fn, tol) in CHECKS.items()]
