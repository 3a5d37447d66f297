"""
Mixed finite elements for weakly symmetric elasticity in 2D.

Stress rows are lowest-order BDM fields, displacement and rotation are piecewise
constant. The stress degrees of freedom on facet ``e`` are, for each row
``r`` and moment ``k``,

    dof(4 e + 2 r + k) = int_e (sigma_r . n_e) q_k ds,

with ``n_e`` the global unit normal, ``q_0 = 1`` and ``q_1 = sqrt(3) (2 t - 1)``
where ``t`` runs from the low-index to the high-index vertex of the facet.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
import scipy.sparse as sps

from .mesh import BOUNDARY_SIDES, Mesh

SQRT3 = np.sqrt(3.0)

# symmetric degree-2 rule on the reference triangle (barycentric points)
TRI_POINTS = np.array(
    [[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]]
)
TRI_WEIGHTS = np.full(3, 1 / 3)

# Gauss rules on [0, 1]
GAUSS2_T = 0.5 + np.array([-1.0, 1.0]) / (2 * SQRT3)
GAUSS2_W = np.array([0.5, 0.5])
GAUSS3_T = 0.5 + np.array([-1.0, 0.0, 1.0]) * np.sqrt(0.6) / 2
GAUSS3_W = np.array([5.0, 8.0, 5.0]) / 18


# ---------------------------------------------------------------------------
# pointwise algebra


def asym2d(sigma: np.ndarray) -> np.ndarray:
    """sigma_21 - sigma_12, over the trailing 2x2 axes."""
    sigma = np.asarray(sigma, dtype=float)
    return sigma[..., 1, 0] - sigma[..., 0, 1]


def asym2d_adjoint(r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    out = np.zeros(r.shape + (2, 2))
    out[..., 0, 1] = -r
    out[..., 1, 0] = r
    return out


def dev2d(tau: np.ndarray) -> np.ndarray:
    tau = np.asarray(tau, dtype=float)
    tr = tau[..., 0, 0] + tau[..., 1, 1]
    return tau - 0.5 * tr[..., None, None] * np.eye(2)


@dataclass(frozen=True)
class Hooke:
    """Isotropic linear law with shear modulus ``mu`` and Lame parameter ``lam``."""

    mu: float
    lam: float

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"shear modulus must be positive, got {self.mu}")
        if not 2 * self.mu + 2 * self.lam > 0:
            raise ValueError("need 2 mu + d lambda > 0")

    def apply(self, sigma: np.ndarray) -> np.ndarray:
        return hooke_apply(self, sigma)

    def inverse(self, eps: np.ndarray) -> np.ndarray:
        eps = np.asarray(eps, dtype=float)
        tr = eps[..., 0, 0] + eps[..., 1, 1]
        return 2 * self.mu * eps + self.lam * tr[..., None, None] * np.eye(2)


@dataclass(frozen=True)
class HenckyVonMises:
    alpha: float
    beta: float

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError(f"alpha must be non-negative, got {self.alpha}")
        if self.beta > 2:
            raise ValueError(f"beta must not exceed 2, got {self.beta}")

    def lame(self, zeta):
        return hencky_lame(zeta, self.alpha, self.beta)


ConstitutiveLaw = Union[Hooke, HenckyVonMises]


def hooke_apply(law: Hooke, sigma: np.ndarray) -> np.ndarray:
    """Compliance: (sigma - lam / (2 mu + 2 lam) tr(sigma) I) / (2 mu)."""
    sigma = np.asarray(sigma, dtype=float)
    tr = sigma[..., 0, 0] + sigma[..., 1, 1]
    kappa = law.lam / (2 * law.mu + 2 * law.lam)
    return (sigma - kappa * tr[..., None, None] * np.eye(2)) / (2 * law.mu)


def hencky_lame(zeta, alpha: float, beta: float):
    """Lame parameters ``(mu, lam)`` as functions of the deviatoric strain norm."""
    zeta = np.asarray(zeta, dtype=float)
    if np.any(zeta < 0):
        raise ValueError("deviatoric strain norm must be non-negative")
    mu = 1.0 + (1.0 + zeta**2) ** ((beta - 2.0) / 2.0)
    lam = alpha * (1.0 - 0.5 * mu)
    return mu, lam


def _stress_of_zeta(zeta, beta):
    e = (beta - 2.0) / 2.0
    w = 1.0 + zeta**2
    g = 2.0 * zeta * (1.0 + w**e)
    dg = 2.0 * (1.0 + w**e) + 4.0 * e * zeta**2 * w ** (e - 1.0)
    return g, dg


def solve_zeta(s, alpha: float, beta: float, tol: float = 1e-13, maxiter: int = 200):
    """
    Solve ``2 mu(zeta) zeta = s`` for ``zeta >= 0``, elementwise.

    The left-hand side is strictly increasing and lies between ``2 zeta`` and
    ``4 zeta``, so the root is bracketed by ``[s/4, s/2]``. Safeguarded Newton.
    """
    del alpha  # mu does not depend on alpha
    s = np.asarray(s, dtype=float)
    scalar = s.ndim == 0
    s = np.atleast_1d(s)
    lo = s / 4.0
    hi = s / 2.0
    z = 0.5 * (lo + hi)
    scale = np.maximum(1.0, s)
    for _ in range(maxiter):
        g, dg = _stress_of_zeta(z, beta)
        res = g - s
        if np.all(np.abs(res) <= tol * scale):
            break
        lo = np.where(res < 0, z, lo)
        hi = np.where(res > 0, z, hi)
        z_new = z - res / dg
        bad = ~((z_new > lo) & (z_new < hi))
        z = np.where(bad, 0.5 * (lo + hi), z_new)
    return float(z[0]) if scalar else z


# ---------------------------------------------------------------------------
# boundary conditions and DOFs


@dataclass(frozen=True)
class BoundarySpec:
    """Split of the boundary sides into displacement and traction parts."""

    displacement: tuple[str, ...]
    traction: tuple[str, ...] = ()

    def __post_init__(self):
        d, t = set(self.displacement), set(self.traction)
        if not d:
            raise ValueError("the displacement boundary must be non-empty")
        if d & t:
            raise ValueError(f"sides {sorted(d & t)} appear in both parts")
        if d | t != set(BOUNDARY_SIDES):
            raise ValueError("displacement and traction sides must cover the boundary")


class DofMap:
    """
    Indexing of the discrete spaces.

    Full stress DOF ``4 e + 2 r + k`` survives unless facet ``e`` lies on the
    traction boundary. ``free`` lists the surviving full indices in increasing
    order; ``full_to_free`` is -1 on eliminated DOFs.
    """

    def __init__(self, mesh: Mesh, bc: BoundarySpec):
        self.mesh = mesh
        self.bc = bc
        n_full = 4 * mesh.num_facets
        mask = np.ones(n_full, dtype=bool)
        for e in mesh.boundary_facets(bc.traction):
            mask[4 * e : 4 * e + 4] = False
        self.essential_mask = ~mask
        self.free = np.flatnonzero(mask)
        self.full_to_free = -np.ones(n_full, dtype=int)
        self.full_to_free[self.free] = np.arange(self.free.size)
        self.num_full = n_full

    @property
    def n_sigma(self) -> int:
        return self.free.size

    @property
    def n_u(self) -> int:
        return 2 * self.mesh.num_cells

    @property
    def n_r(self) -> int:
        return self.mesh.num_cells

    def u_dofs(self, cell: int) -> np.ndarray:
        return np.array([2 * cell, 2 * cell + 1])

    def r_dof(self, cell: int) -> int:
        return self.n_u + cell

    def cell_rows(self, cell: int) -> np.ndarray:
        """Rows of the constraint operator belonging to ``cell``."""
        return np.array([2 * cell, 2 * cell + 1, self.n_u + cell])

    def facet_dofs(self, facet: int) -> np.ndarray:
        """Free indices of the 4 stress DOFs on ``facet`` (-1 where eliminated)."""
        return self.full_to_free[4 * facet : 4 * facet + 4]


# ---------------------------------------------------------------------------
# the discretization


@dataclass
class MixedSystem:
    """Assembled operators; ``f`` stacks the displacement and rotation parts."""

    A: sps.csr_matrix
    B: sps.csr_matrix
    M_sigma: sps.csr_matrix
    M_u: sps.dia_matrix
    M_r: sps.dia_matrix
    f: np.ndarray
    g: np.ndarray
    D: sps.csr_matrix
    dofmap: DofMap

    @property
    def n_sigma(self) -> int:
        return self.dofmap.n_sigma

    @property
    def n_constraints(self) -> int:
        return self.B.shape[0]


class Discretization:
    """
    Geometry-dependent data of the mixed element on a fixed mesh and boundary
    split. Everything parameter-independent is computed once here.
    """

    def __init__(self, mesh: Mesh, bc: BoundarySpec):
        self.mesh = mesh
        self.bc = bc
        self.dofmap = DofMap(mesh, bc)
        nc = mesh.num_cells
        self.areas = mesh.cell_areas
        self.centers = mesh.cell_centers

        pts = mesh.vertices[mesh.cells]  # (nc, 3, 2)
        lens = mesh.facet_lengths
        self._scale = lens[mesh.cell_facets].max(axis=1)
        self._coef = self._shape_coefficients(pts)  # (nc, 6 monomials, 6 shapes)

        # shape values at volume quadrature points: (nc, q, 6, 2)
        qx = np.einsum("qv,cvd->cqd", TRI_POINTS, pts)
        self._phi_q = self._eval_shapes(qx)
        self._w_q = self.areas[:, None] * TRI_WEIGHTS[None, :]

        # local DOF a = 4 j + 2 r + k  <->  shape 2 j + k, row r
        loc_shape = np.array([2 * (a // 4) + a % 2 for a in range(12)])
        loc_row = np.array([(a // 2) % 2 for a in range(12)])
        self._loc_shape, self._loc_row = loc_shape, loc_row
        full = 4 * mesh.cell_facets[:, loc_shape // 2] + 2 * loc_row + loc_shape % 2
        self._loc_free = self.dofmap.full_to_free[full]  # (nc, 12)

        self._M_loc, self._T_loc = self._local_mass()
        self._pattern()

        self.B = self._assemble_B()
        self.M_sigma = self._assemble_local(self._M_loc.reshape(nc, -1))
        self.M_u = sps.diags(np.repeat(self.areas, 2))
        self.M_r = sps.diags(self.areas)
        bu = self.B[: 2 * nc]
        self.Div = sps.diags(-1.0 / np.repeat(self.areas, 2)) @ bu
        self.D = (self.M_sigma + bu.T @ sps.diags(1.0 / np.repeat(self.areas, 2)) @ bu).tocsr()
        self.center_eval = self._center_evaluation()

    # -- element construction ------------------------------------------------

    def _monomials(self, x: np.ndarray) -> np.ndarray:
        """Vector monomials at points ``x`` of shape (nc, m, 2): (nc, m, 6, 2)."""
        xi = (x[..., 0] - self.centers[:, None, 0]) / self._scale[:, None]
        eta = (x[..., 1] - self.centers[:, None, 1]) / self._scale[:, None]
        vals = np.stack([np.ones_like(xi), xi, eta], axis=-1)  # (nc, m, 3)
        out = np.zeros(x.shape[:-1] + (6, 2))
        out[..., 0:3, 0] = vals
        out[..., 3:6, 1] = vals
        return out

    def _shape_coefficients(self, pts: np.ndarray) -> np.ndarray:
        mesh = self.mesh
        nc = mesh.num_cells
        normals = mesh.facet_normals
        lens = mesh.facet_lengths
        V = np.zeros((nc, 6, 6))
        for j in range(3):
            e = mesh.cell_facets[:, j]
            lo = mesh.vertices[mesh.facets[e, 0]]
            hi = mesh.vertices[mesh.facets[e, 1]]
            x = lo[:, None, :] + GAUSS2_T[None, :, None] * (hi - lo)[:, None, :]
            m = self._monomials(x)  # (nc, 2, 6, 2)
            mn = np.einsum("cqmd,cd->cqm", m, normals[e])
            for k, q in enumerate((np.ones_like(GAUSS2_T), SQRT3 * (2 * GAUSS2_T - 1))):
                V[:, 2 * j + k, :] = lens[e, None] * np.einsum("q,q,cqm->cm", GAUSS2_W, q, mn)
        return np.linalg.inv(V)

    def _eval_shapes(self, x: np.ndarray) -> np.ndarray:
        """Shape function values at points (nc, m, 2) -> (nc, m, 6, 2)."""
        return np.einsum("cqmd,cms->cqsd", self._monomials(x), self._coef)

    def _local_mass(self):
        phi = self._phi_q[:, :, self._loc_shape, :]  # (nc, q, 12, 2)
        row = self._loc_row
        same = row[:, None] == row[None, :]
        M = np.einsum("cq,cqad,cqbd->cab", self._w_q, phi, phi) * same[None]
        tr = np.take_along_axis(phi, row[None, None, :, None], axis=3)[..., 0]  # (nc,q,12)
        T = np.einsum("cq,cqa,cqb->cab", self._w_q, tr, tr)
        return M, T

    def _pattern(self):
        lf = self._loc_free
        rows = np.repeat(lf, 12, axis=1).ravel()
        cols = np.tile(lf, (1, 12)).ravel()
        keep = (rows >= 0) & (cols >= 0)
        self._keep = keep
        n = self.dofmap.n_sigma
        self._csr_shape = (n, n)
        self._rows, self._cols = rows[keep], cols[keep]

    def _assemble_local(self, local: np.ndarray) -> sps.csr_matrix:
        data = local.ravel()[self._keep]
        mat = sps.coo_matrix((data, (self._rows, self._cols)), shape=self._csr_shape)
        return mat.tocsr()

    def _assemble_B(self) -> sps.csr_matrix:
        mesh, dm = self.mesh, self.dofmap
        nc = mesh.num_cells
        rows, cols, vals = [], [], []
        # linear momentum: -int_T div(sigma_r) = -sum_facets sign * flux
        for j in range(3):
            for r in range(2):
                a = 4 * j + 2 * r
                rows.append(2 * np.arange(nc) + r)
                cols.append(self._loc_free[:, a])
                vals.append(-mesh.cell_signs[:, j].astype(float))
        # angular momentum: int_T asym(sigma), exact via the centroid value
        phic = self._eval_shapes(self.centers[:, None, :])[:, 0]  # (nc, 6, 2)
        for a in range(12):
            s, r = self._loc_shape[a], self._loc_row[a]
            val = -phic[:, s, 1] if r == 0 else phic[:, s, 0]
            rows.append(2 * nc + np.arange(nc))
            cols.append(self._loc_free[:, a])
            vals.append(self.areas * val)
        rows, cols, vals = map(np.concatenate, (rows, cols, vals))
        keep = cols >= 0
        B = sps.coo_matrix(
            (vals[keep], (rows[keep], cols[keep])), shape=(3 * nc, dm.n_sigma)
        ).tocsr()
        B.eliminate_zeros()
        return B

    def _center_evaluation(self) -> sps.csr_matrix:
        """Matrix mapping stress DOFs to the 4 entries of sigma at cell centers."""
        nc = self.mesh.num_cells
        phic = self._eval_shapes(self.centers[:, None, :])[:, 0]
        rows, cols, vals = [], [], []
        for a in range(12):
            s, r = self._loc_shape[a], self._loc_row[a]
            for d in range(2):
                rows.append(4 * np.arange(nc) + 2 * r + d)
                cols.append(self._loc_free[:, a])
                vals.append(phic[:, s, d])
        rows, cols, vals = map(np.concatenate, (rows, cols, vals))
        keep = cols >= 0
        return sps.coo_matrix(
            (vals[keep], (rows[keep], cols[keep])), shape=(4 * nc, self.dofmap.n_sigma)
        ).tocsr()

    # -- parameter-dependent pieces -------------------------------------------

    def compliance(self, mu, lam) -> sps.csr_matrix:
        """A_h for cellwise (or constant) Lame parameters."""
        nc = self.mesh.num_cells
        mu = np.broadcast_to(np.asarray(mu, dtype=float), (nc,))
        lam = np.broadcast_to(np.asarray(lam, dtype=float), (nc,))
        if np.any(mu <= 0) or np.any(2 * mu + 2 * lam <= 0):
            raise ValueError("Lame parameters violate mu > 0, 2 mu + 2 lam > 0")
        kappa = lam / (2 * mu + 2 * lam)
        local = (self._M_loc - kappa[:, None, None] * self._T_loc) / (2 * mu)[:, None, None]
        return self._assemble_local(local.reshape(nc, -1))

    def body_load(self, f_u: Optional[Callable]) -> np.ndarray:
        """Right-hand side of B sigma = f: cell integrals of f_u, zero rotation part."""
        nc = self.mesh.num_cells
        f = np.zeros(3 * nc)
        if f_u is None:
            return f
        pts = self.mesh.vertices[self.mesh.cells]
        qx = np.einsum("qv,cvd->cqd", TRI_POINTS, pts)
        vals = np.asarray(f_u(qx.reshape(-1, 2)), dtype=float).reshape(nc, 3, 2)
        f[: 2 * nc] = np.einsum("cq,cqd->cd", self._w_q, vals).ravel()
        return f

    def boundary_load(self, g_u: Optional[Callable]) -> np.ndarray:
        """g_h(tau) = int_{displacement boundary} g_u . (tau nu) ds."""
        mesh, dm = self.mesh, self.dofmap
        g = np.zeros(dm.n_sigma)
        if g_u is None:
            return g
        facets = mesh.boundary_facets(self.bc.displacement)
        if facets.size == 0:
            return g
        cells = mesh.facet_cells[facets, 0]
        loc = np.argmax(mesh.cell_facets[cells] == facets[:, None], axis=1)
        sign = mesh.cell_signs[cells, loc].astype(float)
        lo = mesh.vertices[mesh.facets[facets, 0]]
        hi = mesh.vertices[mesh.facets[facets, 1]]
        x = lo[:, None, :] + GAUSS3_T[None, :, None] * (hi - lo)[:, None, :]
        gv = np.asarray(g_u(x.reshape(-1, 2)), dtype=float).reshape(facets.size, 3, 2)
        # the normal trace of the (e, r, k) basis function on e is q_k / |e|;
        # the 1/|e| cancels the ds scaling of the reference rule
        for k, q in enumerate((np.ones_like(GAUSS3_T), SQRT3 * (2 * GAUSS3_T - 1))):
            mom = np.einsum("q,q,fqd->fd", GAUSS3_W, q, gv)
            for r in range(2):
                g[dm.full_to_free[4 * facets + 2 * r + k]] = sign * mom[:, r]
        return g

    def interpolate(self, func: Callable) -> np.ndarray:
        """DOFs of a matrix field ``func(x) -> (m, 2, 2)``; exact on linear rows."""
        mesh, dm = self.mesh, self.dofmap
        lo = mesh.vertices[mesh.facets[:, 0]]
        hi = mesh.vertices[mesh.facets[:, 1]]
        x = lo[:, None, :] + GAUSS3_T[None, :, None] * (hi - lo)[:, None, :]
        vals = np.asarray(func(x.reshape(-1, 2)), dtype=float).reshape(-1, 3, 2, 2)
        sn = np.einsum("fqrd,fd->fqr", vals, mesh.facet_normals)
        out = np.zeros(dm.num_full)
        lens = mesh.facet_lengths
        for k, q in enumerate((np.ones_like(GAUSS3_T), SQRT3 * (2 * GAUSS3_T - 1))):
            mom = lens[:, None] * np.einsum("q,q,fqr->fr", GAUSS3_W, q, sn)
            for r in range(2):
                out[4 * np.arange(mesh.num_facets) + 2 * r + k] = mom[:, r]
        return out[dm.free]

    def eval_at_centers(self, sigma: np.ndarray) -> np.ndarray:
        """Stress values at cell barycenters, shape (nc, 2, 2) (or (..., nc, 2, 2))."""
        vals = self.center_eval @ np.asarray(sigma)
        if vals.ndim == 1:
            return vals.reshape(-1, 2, 2)
        return np.moveaxis(vals, 0, -1).reshape(vals.shape[1:] + (-1, 2, 2))

    def lame_from_stress(self, sigma: np.ndarray, law: HenckyVonMises):
        """Cellwise Hencky-von Mises Lame parameters implied by ``sigma``."""
        s = np.linalg.norm(dev2d(self.eval_at_centers(sigma)), axis=(-2, -1))
        zeta = solve_zeta(s, law.alpha, law.beta)
        return hencky_lame(zeta, law.alpha, law.beta)

    def assemble(self, mu, lam, f_u=None, g_u=None) -> MixedSystem:
        return MixedSystem(
            A=self.compliance(mu, lam),
            B=self.B,
            M_sigma=self.M_sigma,
            M_u=self.M_u,
            M_r=self.M_r,
            f=self.body_load(f_u),
            g=self.boundary_load(g_u),
            D=self.D,
            dofmap=self.dofmap,
        )

    def sigma_norm(self, sigma: np.ndarray) -> np.ndarray:
        """Sigma_h norm, sqrt(sigma^T D sigma), columnwise for 2D input."""
        sigma = np.asarray(sigma)
        return np.sqrt(np.maximum(np.sum(sigma * (self.D @ sigma), axis=0), 0.0))

    def p0_norm(self, values: np.ndarray, components: int) -> np.ndarray:
        w = np.repeat(self.areas, components)
        values = np.asarray(values)
        if values.ndim == 1:
            return np.sqrt(np.sum(w * values**2))
        return np.sqrt(np.sum(w[:, None] * values**2, axis=0))


def assemble(
    mesh: Mesh,
    dofmap: Optional[DofMap],
    law_per_cell,
    bc: BoundarySpec,
    f_u: Optional[Callable] = None,
    g_u: Optional[Callable] = None,
) -> MixedSystem:
    """
    Assemble the mixed system for cellwise Lame parameters.

    Args:
        mesh (Mesh): the triangulation.
        dofmap (DofMap or None): must match ``mesh`` and ``bc`` when given.
        law_per_cell: ``(mu, lam)`` arrays of length ``num_cells`` (scalars are
            broadcast), or a :class:`Hooke` law applied everywhere.
        bc (BoundarySpec): boundary split.
        f_u, g_u (callable): vectorized fields ``x (m, 2) -> (m, 2)``.

    Returns:
        MixedSystem: the assembled operators.
    """
    if dofmap is not None and (dofmap.mesh is not mesh or dofmap.bc != bc):
        raise ValueError("dofmap does not belong to this mesh and boundary split")
    if isinstance(law_per_cell, Hooke):
        mu, lam = law_per_cell.mu, law_per_cell.lam
    else:
        mu, lam = law_per_cell
    for arr in (np.asarray(mu), np.asarray(lam)):
        if arr.ndim and arr.shape != (mesh.num_cells,):
            raise ValueError("cellwise Lame arrays must have one entry per cell")
    return Discretization(mesh, bc).assemble(mu, lam, f_u, g_u)
