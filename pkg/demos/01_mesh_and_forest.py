"""
Structured triangulations, the dual graph and the spanning forest used by the
tree solver.

    python demos/01_mesh_and_forest.py
"""
# %%
import numpy as np

from conservative_rom.fem import BoundarySpec
from conservative_rom.mesh import build_dual_graph, build_structured_unit_square
from conservative_rom.tree import build_forest

mesh = build_structured_unit_square(4, 3)
print(f"{mesh.num_cells} triangles, {mesh.num_facets} facets, h = {mesh.h:.3f}")
print("total area:", mesh.cell_areas.sum())

# %%
# Every interior facet joins two cells; boundary facets carry a side label.
dual = build_dual_graph(mesh)
print("dual graph edges:", dual.num_edges, "connected:", dual.is_connected())
print("boundary facets per side:",
      {side: len(mesh.boundary_facets((side,))) for side in ("bottom", "top", "left", "right")})

# %%
# The footing clamps bottom and top. Forest roots sit on those facets, spread
# along the boundary, and each tree grows breadth-first through the dual graph.
bc = BoundarySpec(("bottom", "top"), ("left", "right"))
for roots in (1, 2, 4):
    forest = build_forest(mesh, bc, roots)
    print(f"{roots} root(s): depth {forest.depth.max()}, root cells "
          f"{[c for c, _ in forest.roots]}")

# %%
forest = build_forest(mesh, bc, 2)
print("elimination order (leaves first):", forest.elimination_order[:10], "...")
print("parent of each cell:", forest.parent)
