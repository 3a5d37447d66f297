"""
Spanning-tree right-inverse of the momentum constraint operator.

Every cell owns exactly one "tree facet": the facet to its parent in a
breadth-first spanning forest of the dual graph, or a displacement-boundary
facet for roots. Three of the four stress DOFs on that facet are enough to
satisfy the cell's three equations (two linear momentum, one angular momentum)
once the DOFs of its children are known, so ``B Pi^T`` is block triangular in
leaves-first order and ``S_I = Pi^T (B Pi^T)^{-1}`` costs one 3x3 solve per cell.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sps

from .fem import BoundarySpec, DofMap
from .mesh import DualGraph, Mesh, build_dual_graph

PIVOT_TOL = 1e-10


class FactorizationError(RuntimeError):
    """Raised when a cell's local block is numerically singular."""

    def __init__(self, cell: int, det: float):
        super().__init__(f"local block of cell {cell} is singular (|det| = {det:.3e})")
        self.cell = cell
        self.det = det


@dataclass(frozen=True)
class SpanningForest:
    """
    Attributes:
        roots (list): (cell, boundary facet) pairs.
        parent (np.ndarray): parent cell, -1 for roots.
        tree_facet (np.ndarray): per cell, the facet to its parent (or its root
            facet for roots).
        order (np.ndarray): breadth-first order, roots first.
        depth (np.ndarray): distance to the root of each cell's tree.
    """

    roots: list[tuple[int, int]]
    parent: np.ndarray
    tree_facet: np.ndarray
    order: np.ndarray
    depth: np.ndarray

    @property
    def num_cells(self) -> int:
        return self.parent.size

    @property
    def elimination_order(self) -> np.ndarray:
        """Leaves first."""
        return self.order[::-1]

    @property
    def num_tree_edges(self) -> int:
        return int(np.sum(self.parent >= 0))


def _perimeter_coordinate(p: np.ndarray) -> float:
    x, y = p
    tol = 1e-12
    if abs(y) < tol:
        return x
    if abs(x - 1) < tol:
        return 1 + y
    if abs(y - 1) < tol:
        return 2 + (1 - x)
    return 3 + (1 - y)


def build_forest(
    mesh: Mesh,
    bc: BoundarySpec,
    root_count: int = 1,
    dual: Optional[DualGraph] = None,
) -> SpanningForest:
    """
    Breadth-first spanning forest of the dual graph.

    Roots are displacement-boundary cells spread evenly along the
    counter-clockwise perimeter ordering of the displacement boundary facets.
    """
    if root_count < 1:
        raise ValueError("root_count must be positive")
    dual = dual if dual is not None else build_dual_graph(mesh)

    facets = mesh.boundary_facets(bc.displacement)
    mids = 0.5 * (mesh.vertices[mesh.facets[facets, 0]] + mesh.vertices[mesh.facets[facets, 1]])
    perim = np.array([_perimeter_coordinate(p) for p in mids])
    facets = facets[np.argsort(perim, kind="stable")]
    cells = mesh.facet_cells[facets, 0]
    available = len(set(cells.tolist()))
    if root_count > available:
        raise ValueError(
            f"root_count={root_count} exceeds the {available} cells on the displacement boundary"
        )

    m = facets.size
    used: set[int] = set()
    roots = []
    for i in range(root_count):
        start = int((i + 0.5) * m / root_count)
        for step in range(m):
            j = (start + step) % m
            if cells[j] not in used:
                used.add(int(cells[j]))
                roots.append((int(cells[j]), int(facets[j])))
                break

    nc = mesh.num_cells
    adj = dual.adjacency()
    parent = -np.ones(nc, dtype=int)
    tree_facet = -np.ones(nc, dtype=int)
    depth = -np.ones(nc, dtype=int)
    queue = deque()
    for c, e in roots:
        tree_facet[c] = e
        depth[c] = 0
        queue.append(c)
    order = []
    while queue:
        c = queue.popleft()
        order.append(c)
        for nb, e in adj[c]:
            if depth[nb] < 0:
                depth[nb] = depth[c] + 1
                parent[nb] = c
                tree_facet[nb] = e
                queue.append(nb)
    if len(order) != nc:
        raise ValueError("the dual graph is not connected")
    return SpanningForest(roots, parent, tree_facet, np.array(order), depth)


class TreeFactorization:
    """
    Per-cell local inverses realizing ``S_I`` and its adjoint.

    Attributes:
        forest (SpanningForest): the underlying forest.
        selected (np.ndarray): (nc, 3) free stress DOFs solved for in each cell.
        local_inv (np.ndarray): (nc, 3, 3) inverses of the cell blocks.
        coupling (np.ndarray): (nc, 3, 3) action of a cell's DOFs on the
            equations of its parent (zero for roots).
        min_det (float): smallest absolute pivot determinant encountered.
    """

    def __init__(self, B: sps.spmatrix, dofmap: DofMap, forest: SpanningForest):
        B = sps.csc_matrix(B)
        nc = forest.num_cells
        self.forest = forest
        self.n_sigma = B.shape[1]
        self.n_rows = B.shape[0]
        self.rows = np.stack([dofmap.cell_rows(c) for c in range(nc)])
        self.selected = np.empty((nc, 3), dtype=int)
        self.local_inv = np.empty((nc, 3, 3))
        self.coupling = np.zeros((nc, 3, 3))
        self.dets = np.empty(nc)

        subsets = list(itertools.combinations(range(4), 3))
        for c in range(nc):
            cols = dofmap.facet_dofs(forest.tree_facet[c])
            if np.any(cols < 0):
                raise ValueError(f"tree facet of cell {c} carries no stress DOFs")
            block = B[:, cols].toarray()
            local = block[self.rows[c]]
            dets = [abs(np.linalg.det(local[:, s])) for s in subsets]
            best = int(np.argmax(dets))
            scale = np.prod(np.linalg.norm(local, axis=1))
            if dets[best] < PIVOT_TOL * scale or scale == 0:
                raise FactorizationError(c, dets[best])
            sel = list(subsets[best])
            self.selected[c] = cols[sel]
            self.local_inv[c] = np.linalg.inv(local[:, sel])
            self.dets[c] = dets[best]
            p = forest.parent[c]
            if p >= 0:
                self.coupling[c] = block[self.rows[p]][:, sel]
        self.min_det = float(self.dets.min())

    # -- applications --------------------------------------------------------

    def apply_SI(self, f: np.ndarray) -> np.ndarray:
        """Stress with ``B sigma = f``, supported on the tree-facet DOFs."""
        f = np.asarray(f, dtype=float)
        if f.shape[0] != self.n_rows:
            raise ValueError(f"expected {self.n_rows} constraint rows, got {f.shape[0]}")
        rhs = f.copy()
        out = np.zeros((self.n_sigma,) + f.shape[1:])
        parent, rows = self.forest.parent, self.rows
        inv, sel, coup = self.local_inv, self.selected, self.coupling
        for c in self.forest.elimination_order:
            xc = inv[c] @ rhs[rows[c]]
            out[sel[c]] = xc
            p = parent[c]
            if p >= 0:
                rhs[rows[p]] -= coup[c] @ xc
        return out

    def apply_SI_adjoint(self, phi: np.ndarray) -> np.ndarray:
        """Transposed solve, roots to leaves: returns stacked ``(u, r)``."""
        phi = np.asarray(phi, dtype=float)
        if phi.shape[0] != self.n_sigma:
            raise ValueError(f"expected {self.n_sigma} stress DOFs, got {phi.shape[0]}")
        out = np.zeros((self.n_rows,) + phi.shape[1:])
        parent, rows = self.forest.parent, self.rows
        inv, sel, coup = self.local_inv, self.selected, self.coupling
        for c in self.forest.order:
            rhs = phi[sel[c]]
            p = parent[c]
            if p >= 0:
                rhs = rhs - coup[c].T @ out[rows[p]]
            out[rows[c]] = inv[c].T @ rhs
        return out

    def support(self) -> np.ndarray:
        """Boolean mask of the stress DOFs ``S_I`` can write to."""
        mask = np.zeros(self.n_sigma, dtype=bool)
        mask[self.selected.ravel()] = True
        return mask


class TreeSolver:
    """The right-inverse together with the constraint operator it inverts."""

    def __init__(self, B: sps.spmatrix, dofmap: DofMap, forest: SpanningForest):
        self.B = sps.csr_matrix(B)
        self.forest = forest
        self.fact = TreeFactorization(B, dofmap, forest)

    def SI(self, f):
        return self.fact.apply_SI(f)

    def SI_adjoint(self, phi):
        return self.fact.apply_SI_adjoint(phi)

    def S0(self, sigma):
        sigma = np.asarray(sigma, dtype=float)
        return sigma - self.fact.apply_SI(self.B @ sigma)

    def spectral_radius_S0(self, iters: int = 200, seed: int = 0) -> float:
        """Largest singular value of ``S_0`` by power iteration on ``S_0^T S_0``.

        ``S_0`` is a projector, so its eigenvalues are 0 and 1; the quantity that
        amplifies perturbations is its operator norm, which is what this returns.
        """
        rng = np.random.default_rng(seed)
        x = rng.standard_normal(self.fact.n_sigma)
        x /= np.linalg.norm(x)
        est = 0.0
        for _ in range(iters):
            y = self.S0(x)
            z = y - self.B.T @ self.SI_adjoint(y)
            est = np.sqrt(np.linalg.norm(z))
            x = z / np.linalg.norm(z)
        return float(est)


def factorize(system, forest: SpanningForest) -> TreeFactorization:
    return TreeFactorization(system.B, system.dofmap, forest)


def apply_SI(fact: TreeFactorization, f: np.ndarray) -> np.ndarray:
    return fact.apply_SI(f)


def apply_S0(fact: TreeFactorization, system, sigma: np.ndarray) -> np.ndarray:
    sigma = np.asarray(sigma, dtype=float)
    return sigma - fact.apply_SI(system.B @ sigma)


def apply_SI_adjoint(fact: TreeFactorization, phi: np.ndarray) -> np.ndarray:
    return fact.apply_SI_adjoint(phi)
