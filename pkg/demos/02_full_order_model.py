"""
Full-order mixed solves for both case studies.

    python demos/02_full_order_model.py
"""
# %%
import numpy as np

from conservative_rom.cases import Problem, default_config

footing = Problem(default_config("footing"))
mu = np.array([1.3, 1.6, 0.54, 0.65])  # g_y, f_y, mu, lambda
sol = footing.solve(mu)
print("stress dofs:", sol.sigma.size, " displacement dofs:", sol.u.size)
print("max |B sigma - f| =", np.abs(footing.B @ sol.sigma - footing.rhs(mu)).max())

# %%
# Stress tensors at the cell centers, and the largest vertical displacement.
S = footing.disc.eval_at_centers(sol.sigma)
print("mean sigma_yy:", S[:, 1, 1].mean())
print("min u_y:", sol.u.reshape(-1, 2)[:, 1].min())

# %%
# The Hencky-von Mises law is solved by fixed-point iteration on the Lame fields.
hencky = Problem(default_config("hencky", resolution=12))
for beta in (0.0, 1.0, 2.0):
    sol = hencky.solve(np.array([1.5, beta, 0.8, -0.5]))
    print(f"beta = {beta}: {sol.iterations} iteration(s)")

# %%
# The stress alone determines displacement and rotation.
u, r = footing.postprocess(footing.solve(mu).sigma, mu)
ref = footing.solve(mu)
print("post-processing error:", np.linalg.norm(u - ref.u) / np.linalg.norm(ref.u))
