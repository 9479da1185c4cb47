"""Heart task: knowledge uncertainty lights up where there was no data.

Cells inside the heart-shaped mask never appear in training. An SGLB
ensemble should disagree there (high KU) while agreeing on the observed
cells, and its mean predicted variance should follow the true noise field.

Run:  python3 demos/heart_uncertainty.py   (about 30 s with the reduced sizes)
"""

import numpy as np

from ugbdt.boosting import TrainConfig
from ugbdt.data import encode, fit_encoder
from ugbdt.ensemble import member_predictions, train_ensemble
from ugbdt.metrics import auc_roc
from ugbdt.synthetic import HEART_MASK, HeartSpec, generate_heart, heart_grid_features
from ugbdt.uncertainty import score_dataset

# %% Data: 64 observed cells, 200 noisy draws each (the full task uses 1000)
train_set, grid = generate_heart(HeartSpec(per_cell=200), seed=1)
print(f"{train_set.n} training rows, {HEART_MASK.sum()} masked cells")

enc = fit_encoder(train_set)
X = encode(train_set, enc).values

# %% Ensemble: 5 SGLB chains of 300 depth-4 trees with beta = n, gamma = 1 / 2n
config = TrainConfig(mode="sglb", T=300, epsilon=0.1, max_depth=4, seed=1)
ensemble = train_ensemble(X, train_set.target, config, M=5, encoder=enc)

# %% Score the 81 grid cells
X_grid = encode(heart_grid_features(grid), enc).values
tu, edu, ku = score_dataset(ensemble, X_grid).T
masked = grid["masked"].astype(int) == 1
print(f"KU AUC masked vs observed: {auc_roc(ku, masked):.3f}")

# log10 KU on the grid; masked cells should stand out
levels = np.log10(np.maximum(ku, 1e-12)).reshape(9, 9)
for i, row in enumerate(levels):
    cells = " ".join(f"{v:6.1f}" + ("*" if HEART_MASK[i, j] else " ") for j, v in enumerate(row))
    print(cells)
print("(* = masked cell)")

# %% Data uncertainty against the true noise variance on observed cells
sigma2 = (member_predictions(ensemble, X_grid)[..., 1] ** 2).mean(axis=0)
b = grid["b"].astype(float)
print(f"corr(mean sigma^2, b) on observed cells: {np.corrcoef(sigma2[~masked], b[~masked])[0, 1]:.3f}")
