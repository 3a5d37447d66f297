"""Structured triangulations of the unit square and their dual graphs."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

BOUNDARY_SIDES = ("bottom", "top", "left", "right")


@dataclass(frozen=True)
class Mesh:
    """
    A 2D simplicial mesh with oriented cell-facet incidence.

    Attributes:
        vertices (np.ndarray): (num_vertices, 2) coordinates.
        cells (np.ndarray): (num_cells, 3) vertex indices, counter-clockwise.
        facets (np.ndarray): (num_facets, 2) vertex indices, sorted so that
            ``facets[e, 0] < facets[e, 1]``.
        cell_facets (np.ndarray): (num_cells, 3) facet indices; entry ``i`` is the
            facet opposite to local vertex ``i``.
        cell_signs (np.ndarray): (num_cells, 3) +1 if the global facet normal
            points out of the cell, -1 otherwise.
        boundary_tags (dict): boundary facet index -> side name.
        h (float): mesh size.
    """

    vertices: np.ndarray
    cells: np.ndarray
    facets: np.ndarray
    cell_facets: np.ndarray
    cell_signs: np.ndarray
    boundary_tags: dict[int, str]
    h: float
    _facet_cells: np.ndarray = field(repr=False, default=None)

    @property
    def num_cells(self) -> int:
        return self.cells.shape[0]

    @property
    def num_facets(self) -> int:
        return self.facets.shape[0]

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def facet_cells(self) -> np.ndarray:
        """(num_facets, 2) incident cells, -1 marks the missing neighbour."""
        return self._facet_cells

    @property
    def cell_areas(self) -> np.ndarray:
        p = self.vertices[self.cells]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @property
    def cell_centers(self) -> np.ndarray:
        return self.vertices[self.cells].mean(axis=1)

    @property
    def facet_lengths(self) -> np.ndarray:
        t = self.vertices[self.facets[:, 1]] - self.vertices[self.facets[:, 0]]
        return np.hypot(t[:, 0], t[:, 1])

    @property
    def facet_normals(self) -> np.ndarray:
        """Unit global normals: the low-to-high tangent rotated by +90 degrees."""
        t = self.vertices[self.facets[:, 1]] - self.vertices[self.facets[:, 0]]
        n = np.column_stack([-t[:, 1], t[:, 0]])
        return n / self.facet_lengths[:, None]

    def boundary_facets(self, sides=BOUNDARY_SIDES) -> np.ndarray:
        """Sorted indices of the boundary facets tagged with one of ``sides``."""
        sides = set(sides)
        return np.array(
            sorted(e for e, s in self.boundary_tags.items() if s in sides), dtype=int
        )

    def to_text(self) -> str:
        """Plain-text dump (vertex list + cell list) for debugging."""
        lines = [f"vertices {self.num_vertices}"]
        lines += [f"{x:.17g} {y:.17g}" for x, y in self.vertices]
        lines.append(f"cells {self.num_cells}")
        lines += [" ".join(str(v) for v in c) for c in self.cells]
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class DualGraph:
    """One node per cell, one edge per interior facet.

    ``edges[i] = (c0, c1)`` joins the two cells sharing ``edge_facets[i]``.
    """

    num_nodes: int
    edges: np.ndarray
    edge_facets: np.ndarray

    @property
    def num_edges(self) -> int:
        return self.edges.shape[0]

    def adjacency(self) -> list[list[tuple[int, int]]]:
        """Per node, the (neighbour, facet) pairs ordered by facet index."""
        adj: list[list[tuple[int, int]]] = [[] for _ in range(self.num_nodes)]
        for (a, b), e in zip(self.edges, self.edge_facets):
            adj[a].append((int(b), int(e)))
            adj[b].append((int(a), int(e)))
        for nbrs in adj:
            nbrs.sort(key=lambda t: t[1])
        return adj

    def is_connected(self) -> bool:
        if self.num_nodes == 0:
            return True
        adj = self.adjacency()
        seen = np.zeros(self.num_nodes, dtype=bool)
        seen[0] = True
        queue = deque([0])
        while queue:
            c = queue.popleft()
            for nb, _ in adj[c]:
                if not seen[nb]:
                    seen[nb] = True
                    queue.append(nb)
        return bool(seen.all())


def build_structured_unit_square(n_x: int, n_y: int) -> Mesh:
    """
    Triangulate the unit square with ``n_x * n_y`` squares, each split along
    its bottom-left to top-right diagonal.

    Args:
        n_x (int): number of squares along x.
        n_y (int): number of squares along y.

    Returns:
        Mesh: the triangulation with ``2 * n_x * n_y`` cells.
    """
    if int(n_x) != n_x or int(n_y) != n_y or n_x < 1 or n_y < 1:
        raise ValueError(f"cell counts must be positive integers, got ({n_x}, {n_y})")
    n_x, n_y = int(n_x), int(n_y)

    xs = np.linspace(0.0, 1.0, n_x + 1)
    ys = np.linspace(0.0, 1.0, n_y + 1)
    X, Y = np.meshgrid(xs, ys)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return j * (n_x + 1) + i

    cells = []
    for j in range(n_y):
        for i in range(n_x):
            v00, v10 = vid(i, j), vid(i + 1, j)
            v01, v11 = vid(i, j + 1), vid(i + 1, j + 1)
            cells.append((v00, v10, v11))
            cells.append((v00, v11, v01))
    cells = np.array(cells, dtype=int)

    facet_index: dict[tuple[int, int], int] = {}
    facets = []
    cell_facets = np.empty_like(cells)
    cell_signs = np.empty(cells.shape, dtype=int)
    facet_cells = []
    for c, tri in enumerate(cells):
        for loc in range(3):
            # local facet `loc` is opposite local vertex `loc`
            a, b = tri[(loc + 1) % 3], tri[(loc + 2) % 3]
            key = (min(a, b), max(a, b))
            e = facet_index.get(key)
            if e is None:
                e = len(facets)
                facet_index[key] = e
                facets.append(key)
                facet_cells.append([c, -1])
            else:
                facet_cells[e][1] = c
            cell_facets[c, loc] = e
            # ccw traversal a -> b has outward normal (t_y, -t_x); global
            # normal is (-t_y, t_x) for t = x_hi - x_lo, so they agree iff a > b
            cell_signs[c, loc] = 1 if a > b else -1
    facets = np.array(facets, dtype=int)
    facet_cells = np.array(facet_cells, dtype=int)

    boundary_tags = {}
    tol = 1e-12
    for e in np.flatnonzero(facet_cells[:, 1] < 0):
        p, q = vertices[facets[e, 0]], vertices[facets[e, 1]]
        if abs(p[1]) < tol and abs(q[1]) < tol:
            boundary_tags[int(e)] = "bottom"
        elif abs(p[1] - 1) < tol and abs(q[1] - 1) < tol:
            boundary_tags[int(e)] = "top"
        elif abs(p[0]) < tol and abs(q[0]) < tol:
            boundary_tags[int(e)] = "left"
        else:
            boundary_tags[int(e)] = "right"

    return Mesh(
        vertices=vertices,
        cells=cells,
        facets=facets,
        cell_facets=cell_facets,
        cell_signs=cell_signs,
        boundary_tags=boundary_tags,
        h=max(1.0 / n_x, 1.0 / n_y),
        _facet_cells=facet_cells,
    )


def build_dual_graph(mesh: Mesh) -> DualGraph:
    interior = np.flatnonzero(mesh.facet_cells[:, 1] >= 0)
    return DualGraph(
        num_nodes=mesh.num_cells,
        edges=mesh.facet_cells[interior].copy(),
        edge_facets=interior,
    )
