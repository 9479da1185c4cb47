"""Virtual ensembles: members for the price of one model.

A virtual ensemble takes every K-th iterate from the second half of one
SGLB trajectory. Its members are recovered from partial sums collected in a
single pass over the trees, so scoring costs one model evaluation.

Run:  python3 demos/virtual_ensemble.py
"""

import numpy as np

from ugbdt import boosting
from ugbdt.boosting import TrainConfig, predict_raw, train
from ugbdt.ensemble import member_predictions, train_ensemble, virtual_checkpoints, virtual_members

rng = np.random.default_rng(0)
X = rng.uniform(-3, 3, size=(2000, 2))
y = np.sin(X[:, 0]) + 0.3 * rng.standard_normal(2000)

model = train(X, y, TrainConfig(mode="sglb", T=400, epsilon=0.1, max_depth=4, seed=0))

# %% Checkpoints K t for T/2K < t <= T/K
print("checkpoints:", virtual_checkpoints(model.T, 40))
ens = virtual_members(model, K=40)

# %% Each member equals the literally truncated model
probe = rng.uniform(-5, 5, size=(100, 2))
staged = ens.raw_predictions(probe)
gap = max(np.abs(staged[m] - predict_raw(model.truncated(t), probe)).max() for m, t in enumerate(ens.checkpoints))
print(f"max |virtual - truncated| = {gap:.1e}")

# %% Cost: every tree evaluated once per row
boosting.tree_evaluations.reset()
member_predictions(ens, probe)
print(f"tree evaluations: {boosting.tree_evaluations.count} = {len(probe)} rows x {model.T} trees")

# %% Members of one chain are correlated, so their spread is smaller than that
# of independent chains trained with the same settings
ku_virtual = member_predictions(ens, probe)[..., 0].var(axis=0)
independent = train_ensemble(X, y, TrainConfig(mode="sglb", T=400, epsilon=0.1, max_depth=4, seed=0), M=5)
ku_true = member_predictions(independent, probe)[..., 0].var(axis=0)
print(f"mean KU: virtual {ku_virtual.mean():.2e}, independent chains {ku_true.mean():.2e}")
