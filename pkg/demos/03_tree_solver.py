"""
The right-inverse S_I of the constraint operator and the kernel map S_0.

    python demos/03_tree_solver.py
"""
# %%
import numpy as np

from conservative_rom.cases import Problem, default_config

problem = Problem(default_config("footing"))
B, tree = problem.B, problem.tree
rng = np.random.default_rng(0)

f = rng.standard_normal(B.shape[0])
sigma = tree.SI(f)
print("||B S_I f - f||_inf =", np.abs(B @ sigma - f).max())

# %%
# S_0 removes the part of a stress that B sees.
tau = rng.standard_normal(B.shape[1])
print("||B S_0 tau||_inf  =", np.abs(B @ tree.S0(tau)).max())
print("S_0 is idempotent:", np.allclose(tree.S0(tree.S0(tau)), tree.S0(tau)))

# %%
# The adjoint recovers displacement and rotation without a global solve.
phi = rng.standard_normal(B.shape[1])
print("adjoint gap:", abs(tree.SI(f) @ phi - f @ tree.SI_adjoint(phi)))

# %%
# More roots keep the trees shallow and the solutions small.
for roots in (1, 4):
    p = Problem(default_config("footing", root_count=roots))
    sol = p.solve(np.array([1.0, 1.0, 1.0, 1.0]))
    ratio = np.linalg.norm(p.tree.SI(p.B @ sol.sigma)) / np.linalg.norm(sol.sigma)
    print(f"{roots} root(s): |S_I f| / |sigma| = {ratio:.2f}, "
          f"|S_0| = {p.tree.spectral_radius_S0(iters=60):.1f}")
