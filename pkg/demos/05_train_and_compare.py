"""
Train the four reduced models on a coarse footing and compare them.

Takes about a minute; ``--epochs`` and ``--resolution`` trade accuracy for time.

    python demos/05_train_and_compare.py --epochs 2000
"""
# %%
import argparse

import numpy as np

from conservative_rom.cases import Problem, default_config
from conservative_rom.neural import TrainConfig
from conservative_rom.rom import STRATEGIES, evaluate, predict_stress, train_strategy

parser = argparse.ArgumentParser()
parser.add_argument("--epochs", type=int, default=2000)
parser.add_argument("--resolution", type=int, default=8)
args = parser.parse_args()

problem = Problem(default_config("footing", resolution=args.resolution))
mus = problem.config.sample(120, 0)
sols = [problem.solve(m) for m in mus]
S, U, R = (np.column_stack([getattr(s, k) for s in sols]) for k in ("sigma", "u", "r"))
train, test = slice(0, 90), slice(90, 120)

# %%
print(f"{'strategy':>10} {'sigma MRE':>10} {'u MRE':>10} {'ACV':>10}")
models = {}
for strategy in STRATEGIES:
    models[strategy] = train_strategy(strategy, mus[train], S[:, train], problem,
                                      cfg=TrainConfig(epochs=args.epochs))
    rep = evaluate(models[strategy], mus[test], S[:, test], U[:, test], R[:, test])
    print(f"{strategy:>10} {rep.sigma_mre:10.2e} {rep.u_mre:10.2e} {rep.acv:10.2e}")

# %%
# Away from the training data only the split and corrected models keep the
# momentum balance; the others drift.
mu = np.array([1.9, 0.6, 1.5, 0.2])
for strategy, model in models.items():
    sigma = predict_stress(model, mu)
    print(strategy, f"{np.abs(problem.B @ sigma - problem.rhs(mu)).max():.1e}")
