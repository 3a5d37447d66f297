"""Full-order solvers: direct saddle-point solve and the Hencky-von Mises iteration."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from .fem import Discretization, HenckyVonMises, MixedSystem

logger = logging.getLogger(__name__)


class SolverError(RuntimeError):
    pass


@dataclass
class SolutionTriplet:
    sigma: np.ndarray
    u: np.ndarray
    r: np.ndarray
    iterations: int = 1
    residual_history: list[float] = field(default_factory=list)

    @property
    def ur(self) -> np.ndarray:
        return np.concatenate([self.u, self.r])


def saddle_point_matrix(system: MixedSystem) -> sps.csc_matrix:
    """[[A, B^T], [B, 0]] acting on (sigma, -(u, r))."""
    B = system.B
    return sps.bmat([[system.A, B.T], [B, None]], format="csc")


def algebraic_residual(system: MixedSystem, sol: SolutionTriplet) -> float:
    """Relative residual of ``A sigma - B^T (u, r) = g``, ``B sigma = f``."""
    ur = sol.ur
    r1 = system.A @ sol.sigma - system.B.T @ ur - system.g
    r2 = system.B @ sol.sigma - system.f
    scale = max(
        np.linalg.norm(system.g) + np.linalg.norm(system.f),
        np.linalg.norm(system.A @ sol.sigma) + np.linalg.norm(system.B.T @ ur),
        np.finfo(float).tiny,
    )
    return float(np.sqrt(np.linalg.norm(r1) ** 2 + np.linalg.norm(r2) ** 2) / scale)


def solve_linear(system: MixedSystem, check: bool = True) -> SolutionTriplet:
    """Direct sparse LU of the saddle-point system.

    The unknown paired with ``B^T`` is ``-(u, r)``, which keeps the matrix
    symmetric and matches ``A sigma - B^T (u, r) = g``.
    """
    n = system.n_sigma
    K = saddle_point_matrix(system)
    rhs = np.concatenate([system.g, system.f])
    try:
        lu = spla.splu(K)
    except RuntimeError as exc:
        raise SolverError(f"singular saddle-point system: {exc}") from exc
    x = lu.solve(rhs)
    if not np.all(np.isfinite(x)):
        raise SolverError("non-finite solution; is the displacement boundary empty?")
    ur = -x[n:]
    nu = system.dofmap.n_u
    sol = SolutionTriplet(sigma=x[:n], u=ur[:nu], r=ur[nu:])
    if check:
        res = algebraic_residual(system, sol)
        sol.residual_history.append(res)
        if res > 1e-10:
            raise SolverError(f"algebraic residual {res:.2e} above 1e-10")
    return sol


def solve_hencky(
    disc: Discretization,
    law: HenckyVonMises,
    f_u: Optional[Callable] = None,
    g_u: Optional[Callable] = None,
    tol: float = 1e-10,
    maxiter: int = 100,
) -> SolutionTriplet:
    """
    Fixed-point iteration for the Hencky-von Mises law.

    Starts from the zero-strain Lame values (mu = 2, lam = 0), then repeatedly
    evaluates sigma at the cell centers, solves ``2 mu(zeta) zeta = |dev sigma|``
    per cell, reassembles the compliance and re-solves. Stops once the relative
    Sigma_h-norm update drops below ``tol``.
    """
    nc = disc.mesh.num_cells
    f = disc.body_load(f_u)
    g = disc.boundary_load(g_u)
    mu, lam = law.lame(np.zeros(nc))
    sol = solve_linear(_system(disc, mu, lam, f, g))
    history: list[float] = []
    for it in range(1, maxiter + 1):
        mu, lam = disc.lame_from_stress(sol.sigma, law)
        new = solve_linear(_system(disc, mu, lam, f, g))
        norm = disc.sigma_norm(new.sigma)
        upd = disc.sigma_norm(new.sigma - sol.sigma)
        rel = float(upd / norm) if norm > 0 else float(upd)
        history.append(rel)
        sol = new
        if rel < tol:
            sol.iterations = it
            sol.residual_history = history
            return sol
    raise SolverError(
        f"Hencky iteration did not converge in {maxiter} steps; history tail {history[-5:]}"
    )


def _system(disc: Discretization, mu, lam, f, g) -> MixedSystem:
    return MixedSystem(
        A=disc.compliance(mu, lam),
        B=disc.B,
        M_sigma=disc.M_sigma,
        M_u=disc.M_u,
        M_r=disc.M_r,
        f=f,
        g=g,
        D=disc.D,
        dofmap=disc.dofmap,
    )
