"""The two parametrized test problems: a 2D footing and a Hencky-von Mises square."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sps

from .fem import BoundarySpec, Discretization, HenckyVonMises, Hooke
from .fom import SolutionTriplet, solve_hencky, solve_linear
from .mesh import build_structured_unit_square
from .tree import TreeSolver, build_forest

CASE_NAMES = ("footing", "hencky")


@dataclass(frozen=True)
class CaseConfig:
    """
    Everything that defines an experiment.

    ``lower``/``upper`` bound the uniform parameter box. Defaults follow the
    footing and Hencky-von Mises studies (see :func:`default_config`).
    """

    name: str
    resolution: int
    param_names: tuple[str, ...]
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    n_train: int = 150
    n_test: int = 50
    pod_dim: int = 10
    fourier_k: int = 3
    root_count: int = 1
    seed: int = 0
    epochs: int = 5000
    learning_rate: float = 1e-3

    def __post_init__(self):
        if self.name not in CASE_NAMES:
            raise ValueError(f"unknown case {self.name!r}; expected one of {CASE_NAMES}")
        if not (len(self.param_names) == len(self.lower) == len(self.upper)):
            raise ValueError("parameter names and bounds must have equal length")
        if any(lo > hi for lo, hi in zip(self.lower, self.upper)):
            raise ValueError("lower bound above upper bound")
        if self.resolution < 1 or self.n_train < 1 or self.n_test < 1:
            raise ValueError("resolution and sample counts must be positive")

    @property
    def p(self) -> int:
        return len(self.param_names)

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("param_names", "lower", "upper"):
            d[key] = list(d[key])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CaseConfig":
        d = dict(d)
        for key in ("param_names", "lower", "upper"):
            d[key] = tuple(d[key])
        return cls(**d)

    def sample(self, n: int, seed: int) -> np.ndarray:
        """``n`` parameter vectors, uniform and independent per coordinate."""
        rng = np.random.default_rng(seed)
        lo, hi = np.array(self.lower), np.array(self.upper)
        return lo + (hi - lo) * rng.random((n, self.p))

    def in_box(self, mu: np.ndarray) -> np.ndarray:
        mu = np.atleast_2d(mu)
        return np.all((mu >= np.array(self.lower)) & (mu <= np.array(self.upper)), axis=1)


def default_config(name: str, **overrides) -> CaseConfig:
    if name == "footing":
        # mu = 0 makes the compliance singular, so the shear modulus starts at 0.1
        base = dict(
            name="footing",
            resolution=10,
            param_names=("g_y", "f_y", "mu", "lambda"),
            lower=(0.5, 0.5, 0.1, 0.1),
            upper=(2.0, 2.0, 2.0, 2.0),
            pod_dim=10,
            fourier_k=3,
            # one root makes tree solutions ~25x larger than the stress itself
            root_count=4,
        )
    elif name == "hencky":
        base = dict(
            name="hencky",
            resolution=20,
            param_names=("alpha", "beta", "gamma", "delta"),
            lower=(1.0, 0.0, -1.0, -1.0),
            upper=(2.0, 2.0, 1.0, 1.0),
            pod_dim=15,
            fourier_k=2,
            root_count=4,
        )
    else:
        raise ValueError(f"unknown case {name!r}; expected one of {CASE_NAMES}")
    base.update(overrides)
    return CaseConfig(**base)


# ---------------------------------------------------------------------------


def _footing_fields(mu):
    g_y, f_y = mu[0], mu[1]

    def f_u(x):
        out = np.zeros_like(x)
        out[:, 1] = -1e-2 * f_y
        return out

    def g_u(x):
        # bottom is clamped, the top is displaced downwards
        out = np.zeros_like(x)
        out[:, 1] = np.where(x[:, 1] > 0.5, -1e-3 * g_y, 0.0)
        return out

    return f_u, g_u


def _hencky_fields(mu):
    gamma, delta = mu[2], mu[3]

    def f_u(x):
        X, Y = x[:, 0], x[:, 1]
        return delta * np.column_stack([(4 * Y - 1) * (4 * Y - 3), (4 * X - 1) * (4 * X - 3)])

    def g_u(x):
        X, Y = x[:, 0], x[:, 1]
        return gamma / 10 * np.column_stack([X * (1 - X), Y * (1 - Y)])

    return f_u, g_u


class Problem:
    """
    A case on its mesh, with the parameter-independent operators and the tree
    solver built once.
    """

    def __init__(self, config: CaseConfig):
        self.config = config
        self.mesh = build_structured_unit_square(config.resolution, config.resolution)
        if config.name == "footing":
            self.bc = BoundarySpec(("bottom", "top"), ("left", "right"))
            self._fields = _footing_fields
        else:
            self.bc = BoundarySpec(("bottom", "top", "left", "right"))
            self._fields = _hencky_fields
        self.disc = Discretization(self.mesh, self.bc)
        self.forest = build_forest(self.mesh, self.bc, config.root_count)
        self.tree = TreeSolver(self.disc.B, self.disc.dofmap, self.forest)

    @property
    def B(self) -> sps.csr_matrix:
        return self.disc.B

    @property
    def D(self) -> sps.csr_matrix:
        return self.disc.D

    @property
    def n_sigma(self) -> int:
        return self.disc.dofmap.n_sigma

    def fields(self, mu) -> tuple[Callable, Callable]:
        return self._fields(np.asarray(mu, dtype=float))

    def law(self, mu):
        mu = np.asarray(mu, dtype=float)
        if self.config.name == "footing":
            return Hooke(mu=float(mu[2]), lam=float(mu[3]))
        return HenckyVonMises(alpha=float(mu[0]), beta=float(mu[1]))

    def rhs(self, mu) -> np.ndarray:
        """``f_mu``, or a (3 nc, N) matrix for a batch of parameters."""
        mu = np.asarray(mu, dtype=float)
        if mu.ndim == 2:
            return np.column_stack([self.rhs(m) for m in mu])
        return self.disc.body_load(self.fields(mu)[0])

    def boundary(self, mu) -> np.ndarray:
        return self.disc.boundary_load(self.fields(np.asarray(mu, dtype=float))[1])

    def compliance(self, mu, sigma: Optional[np.ndarray] = None) -> sps.csr_matrix:
        """A_h at ``mu``; for Hencky the Lame fields are recovered from ``sigma``."""
        law = self.law(mu)
        if isinstance(law, Hooke):
            return self.disc.compliance(law.mu, law.lam)
        if sigma is None:
            raise ValueError("the Hencky compliance needs a stress to evaluate the Lame fields")
        return self.disc.compliance(*self.disc.lame_from_stress(sigma, law))

    def solve(self, mu) -> SolutionTriplet:
        mu = np.asarray(mu, dtype=float)
        f_u, g_u = self.fields(mu)
        law = self.law(mu)
        if isinstance(law, Hooke):
            return solve_linear(self.disc.assemble(law.mu, law.lam, f_u, g_u))
        return solve_hencky(self.disc, law, f_u, g_u)

    def postprocess(self, sigma: np.ndarray, mu) -> tuple[np.ndarray, np.ndarray]:
        """(u, r) = S_I^T (A_h sigma - g_h)."""
        A = self.compliance(mu, sigma)
        ur = self.tree.SI_adjoint(A @ sigma - self.boundary(mu))
        nu = self.disc.dofmap.n_u
        return ur[:nu], ur[nu:]
