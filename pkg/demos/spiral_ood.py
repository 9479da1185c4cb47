"""Spiral: total versus knowledge uncertainty for out-of-domain points.

Points in the gaps between arms are ambiguous (high data uncertainty) but
well covered; points on a ring outside the spiral are novel. Knowledge
uncertainty should separate the ring from in-domain test points better
than total uncertainty does.

Run:  python3 demos/spiral_ood.py
"""

import numpy as np

from ugbdt.boosting import LossSpec, TrainConfig
from ugbdt.cli import plane_field, write_table
from ugbdt.data import encode, fit_encoder
from ugbdt.ensemble import train_ensemble
from ugbdt.metrics import auc_roc, evaluate_split
from ugbdt.synthetic import SpiralSpec, generate_spiral, spiral_ring
from ugbdt.uncertainty import score_dataset

# %% Arm 0 against the other two, with rotated-axis and radius features
train_set = generate_spiral(SpiralSpec(n_per_class=1000), seed=1)
test_set = generate_spiral(SpiralSpec(n_per_class=300), seed=2)
enc = fit_encoder(train_set)
X, y = encode(train_set, enc).values, train_set.target

ensemble = train_ensemble(X, y, TrainConfig(T=400, epsilon=0.1, max_depth=6, seed=1), M=5, loss=LossSpec("logistic"), encoder=enc)
print("test:", evaluate_split(ensemble, test_set))

# %% OOD ring beyond 1.2 times the largest training radius
r_max = train_set["r"].max()
ring = spiral_ring(test_set.n, 1.2 * r_max, 2.0 * r_max, seed=3, schema=train_set.schema)
u_in = score_dataset(ensemble, encode(test_set, enc).values)
u_out = score_dataset(ensemble, encode(ring, enc).values)
labels = np.r_[np.zeros(len(u_in)), np.ones(len(u_out))]
for col, name in enumerate(("TU", "EDU", "KU")):
    print(f"{name} AUC: {auc_roc(np.r_[u_in[:, col], u_out[:, col]], labels):.3f}")

# %% Figure data: uncertainty fields on a 61 x 61 grid, for any plotting tool
header, rows = plane_field(ensemble, extent=2.0, resolution=61)
write_table("spiral_field.csv", header, rows)
print("wrote spiral_field.csv with columns", header)
