"""
POD of footing snapshots, and of their homogeneous parts.

    python demos/04_pod.py
"""
# %%
import numpy as np

from conservative_rom.cases import Problem, default_config
from conservative_rom.pod import compute_pod
from conservative_rom.rom import homogeneous_snapshots

problem = Problem(default_config("footing"))
mus = problem.config.sample(60, 1)
S = np.column_stack([problem.solve(m).sigma for m in mus])

basis = compute_pod(S, 10, gramian=problem.D)
s = basis.singular_values
print("normalized singular values:", np.round(s[:12] / s[0], 8))

# %%
for n in (2, 4, 6, 8, 10):
    print(n, f"{compute_pod(S, n).projection_error(S):.3e}")

# %%
# Snapshots with the particular part removed live in ker B, and so does the
# leading part of their POD basis.
H = homogeneous_snapshots(problem, S)
V0 = compute_pod(H, 6).V
print("max |B V0| =", np.abs(problem.B @ V0).max())
