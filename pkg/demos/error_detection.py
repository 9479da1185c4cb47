"""Error detection with rejection curves.

Reject the most uncertain predictions first and watch the error of what is
kept. PRR scores a ranking on a scale where the error-sorted oracle gets 100
and a random ranking 0.

Run:  python3 demos/error_detection.py
"""

import numpy as np

from ugbdt.boosting import TrainConfig
from ugbdt.ensemble import member_predictions, train_ensemble
from ugbdt.metrics import prr, rejection_curve, rejection_order
from ugbdt.uncertainty import score_dataset

rng = np.random.default_rng(0)
n = 3000
X = rng.uniform(-2, 2, size=(n, 3))
noise = 0.05 + 0.5 * (X[:, 1] > 0)  # half the space is much noisier
y = X[:, 0] ** 2 + noise * rng.standard_normal(n)
X_test = rng.uniform(-2, 2, size=(1000, 3))
y_test = X_test[:, 0] ** 2 + (0.05 + 0.5 * (X_test[:, 1] > 0)) * rng.standard_normal(1000)

ens = train_ensemble(X, y, TrainConfig(T=300, epsilon=0.1, max_depth=4, seed=0), M=4)
mean = member_predictions(ens, X_test)[..., 0].mean(axis=0)
errors = (mean - y_test) ** 2
tu, edu, ku = score_dataset(ens, X_test).T

# %% PRR per measure
for name, u in (("TU", tu), ("EDU", edu), ("KU", ku), ("oracle", errors), ("random", rng.permutation(1000))):
    print(f"PRR {name:>6}: {prr(u, errors):7.2f}")

# %% Retained error at a few rejection rates, rejecting by TU
curve = rejection_curve(rejection_order(tu), errors)
for r in (0.0, 0.25, 0.5, 0.75):
    j = int(r * len(errors))
    print(f"reject {r:4.0%}: retained MSE {curve.retained_error[j]:.4f}")
