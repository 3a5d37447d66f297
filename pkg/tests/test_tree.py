import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conservative_rom.cases import Problem, default_config
from conservative_rom.fem import BoundarySpec
from conservative_rom.mesh import build_structured_unit_square
from conservative_rom.tree import (
    TreeFactorization, TreeSolver, apply_S0, apply_SI, apply_SI_adjoint, build_forest, factorize,
)

from conftest import ALL_SIDES, make_tree

FOOTING_BC = BoundarySpec(("bottom", "top"), ("left", "right"))


@pytest.mark.parametrize("n, roots, edges", [(1, 1, 1), (10, 1, 199), (10, 4, 196)])
def test_forest_counts(n, roots, edges):
    mesh = build_structured_unit_square(n, n)
    forest = build_forest(mesh, BoundarySpec(ALL_SIDES), roots)
    assert len(forest.roots) == roots
    assert forest.num_tree_edges == edges
    tree_facets = forest.tree_facet
    assert len(set(tree_facets.tolist())) == mesh.num_cells  # one facet per cell, no repeats


def test_forest_structure():
    mesh = build_structured_unit_square(6, 6)
    forest = build_forest(mesh, FOOTING_BC, 3)
    boundary = set(mesh.boundary_facets(("bottom", "top")).tolist())
    for c, e in forest.roots:
        assert forest.parent[c] == -1 and forest.depth[c] == 0
        assert e in boundary and mesh.facet_cells[e, 0] == c
    for c in range(mesh.num_cells):
        p = forest.parent[c]
        if p >= 0:
            assert forest.depth[c] == forest.depth[p] + 1
            assert set(mesh.facet_cells[forest.tree_facet[c]]) == {c, p}
    # breadth-first order lists parents before children
    pos = np.empty(mesh.num_cells, dtype=int)
    pos[forest.order] = np.arange(mesh.num_cells)
    has_parent = forest.parent >= 0
    assert np.all(pos[forest.parent[has_parent]] < pos[has_parent])


def test_forest_rejects_bad_root_count():
    mesh = build_structured_unit_square(2, 2)
    with pytest.raises(ValueError):
        build_forest(mesh, BoundarySpec(ALL_SIDES), 0)
    with pytest.raises(ValueError):
        build_forest(mesh, BoundarySpec(ALL_SIDES), 100)


def test_single_square_blocks_invertible():
    disc, tree = make_tree(1)
    fact = tree.fact
    assert fact.local_inv.shape == (2, 3, 3)
    assert np.all(fact.dets > 0)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 8), st.integers(1, 8), st.integers(1, 4), st.booleans())
def test_factorization_sweep(n_x, n_y, roots, footing):
    bc = FOOTING_BC if footing else BoundarySpec(ALL_SIDES)
    mesh = build_structured_unit_square(n_x, n_y)
    roots = min(roots, n_x)
    disc, tree = make_tree(n_x, n_y, roots, bc)
    assert tree.fact.min_det > 0
    f = np.random.default_rng(n_x * 10 + n_y).standard_normal(disc.B.shape[0])
    assert np.abs(disc.B @ tree.SI(f) - f).max() <= 1e-12 * np.abs(f).max()


def test_factorization_is_deterministic():
    disc, tree = make_tree(5, roots=2)
    other = TreeFactorization(disc.B, disc.dofmap, build_forest(disc.mesh, disc.bc, 2))
    assert np.array_equal(tree.fact.selected, other.selected)
    assert np.array_equal(tree.fact.local_inv, other.local_inv)


def test_zero_in_zero_out():
    disc, tree = make_tree(4)
    assert not tree.SI(np.zeros(disc.B.shape[0])).any()
    assert not tree.SI_adjoint(np.zeros(disc.B.shape[1])).any()


def test_right_inverse_dense_oracle():
    for n in (2, 3):
        disc, tree = make_tree(n, roots=2)
        B = disc.B.toarray()
        SI = tree.SI(np.eye(B.shape[0]))
        assert np.abs(B @ SI - np.eye(B.shape[0])).max() < 1e-12
        S0 = np.eye(B.shape[1]) - SI @ B
        assert np.abs(B @ S0).max() < 1e-12
        assert np.abs(S0 @ S0 - S0).max() < 1e-10 * np.abs(S0).max()
        assert np.abs(tree.S0(np.eye(B.shape[1])) - S0).max() < 1e-12 * np.abs(S0).max()


def test_right_inverse_on_footing_load():
    problem = Problem(default_config("footing"))
    f = problem.rhs([1.0, 1.0, 1.0, 1.0])
    s = problem.tree.SI(f)
    assert np.abs(problem.B @ s - f).max() <= 1e-12 * np.abs(f).max()


def test_S_I_support_is_tree_facets():
    disc, tree = make_tree(6, roots=2)
    f = np.random.default_rng(0).standard_normal(disc.B.shape[0])
    s = tree.SI(f)
    assert not s[~tree.fact.support()].any()


def test_kernel_projector(rng):
    disc, tree = make_tree(10, roots=3)
    B = disc.B
    S = rng.standard_normal((B.shape[1], 20))
    P = tree.S0(S)
    assert np.all(np.abs(B @ P).max(axis=0) <= 1e-12 * np.abs(B @ S).max(axis=0) + 1e-14)
    # identity on the kernel, annihilates the range of S_I
    assert np.allclose(tree.S0(P), P, atol=1e-12 * np.abs(P).max())
    F = rng.standard_normal((B.shape[0], 5))
    assert np.abs(tree.S0(tree.SI(F))).max() < 1e-12 * np.abs(tree.SI(F)).max()


def test_adjoint_identity(rng):
    disc, tree = make_tree(6, roots=2)
    for _ in range(20):
        f = rng.standard_normal(disc.B.shape[0])
        g = rng.standard_normal(disc.B.shape[1])
        assert abs(tree.SI(f) @ g - f @ tree.SI_adjoint(g)) <= 1e-12 * np.linalg.norm(f) * np.linalg.norm(g) * 10


def test_adjoint_dense_oracle():
    disc, tree = make_tree(4, roots=2)
    m, n = disc.B.shape
    assert np.abs(tree.SI(np.eye(m)).T - tree.SI_adjoint(np.eye(n))).max() < 1e-12 * 100


def test_different_forests_both_right_inverses(rng):
    mesh = build_structured_unit_square(7, 7)
    bc = BoundarySpec(ALL_SIDES)
    disc, t1 = make_tree(7, roots=1)
    t2 = TreeSolver(disc.B, disc.dofmap, build_forest(mesh, bc, 5))
    f = rng.standard_normal(disc.B.shape[0])
    s1, s2 = t1.SI(f), t2.SI(f)
    assert not np.allclose(s1, s2)
    for s in (s1, s2):
        assert np.abs(disc.B @ s - f).max() <= 1e-12 * np.abs(f).max()


def test_module_level_functions(rng):
    disc, tree = make_tree(3)
    system = disc.assemble(1.0, 1.0)
    fact = factorize(system, tree.forest)
    f = rng.standard_normal(disc.B.shape[0])
    s = rng.standard_normal(disc.B.shape[1])
    assert np.allclose(apply_SI(fact, f), tree.SI(f))
    assert np.allclose(apply_S0(fact, system, s), tree.S0(s))
    assert np.allclose(apply_SI_adjoint(fact, s), tree.SI_adjoint(s))


def test_shape_validation():
    disc, tree = make_tree(2)
    with pytest.raises(ValueError):
        tree.SI(np.zeros(disc.B.shape[0] + 1))
    with pytest.raises(ValueError):
        tree.SI_adjoint(np.zeros(3))


def test_operator_norm_of_S0_at_least_one():
    disc, tree = make_tree(4, roots=2)
    rho = tree.spectral_radius_S0()
    S0 = tree.S0(np.eye(disc.B.shape[1]))
    assert rho == pytest.approx(np.linalg.norm(S0, 2), rel=1e-6)
    assert rho >= 1.0 - 1e-12
