"""Losses, gradients, and the SGB / SGLB training loops."""

from __future__ import annotations

import hashlib
import json
import math
import threading
from dataclasses import asdict, dataclass, field, replace
from functools import cached_property
from typing import Callable

import numpy as np
from scipy.special import expit

from . import _kernels
from .errors import DataError, NumericError, ValidationError
from .rng import stream
from .tree import BinnedMatrix, DecisionTree, TreeParams, fit_binned

LOSS_FOR_TASK = {"regression": "normal_nll", "binary_classification": "logistic"}
PROB_EPS = 1e-12


@dataclass(frozen=True)
class LossSpec:
    kind: str

    def __post_init__(self):
        if self.kind not in ("normal_nll", "logistic"):
            raise ValidationError(f"unknown loss {self.kind!r}")

    @property
    def d_out(self) -> int:
        return 2 if self.kind == "normal_nll" else 1

    @property
    def task(self) -> str:
        return "regression" if self.kind == "normal_nll" else "binary_classification"

    @classmethod
    def for_task(cls, task: str) -> "LossSpec":
        try:
            return cls(LOSS_FOR_TASK[task])
        except KeyError:
            raise ValidationError(f"unknown task {task!r}") from None


@dataclass(frozen=True)
class LogSigmaBounds:
    lo: float = -15.0
    hi: float = 15.0

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValidationError("LogSigmaBounds needs lo < hi")

    def clamp(self, log_sigma):
        return np.clip(log_sigma, self.lo, self.hi)


@dataclass(frozen=True)
class TrainConfig:
    """Boosting hyperparameters.

    ``sample_rate``, ``beta`` and ``gamma`` left as ``None`` take the mode's
    defaults once the training set size ``n`` is known: SGB subsamples half
    the rows with no shrinkage; SGLB uses every row with ``beta = n`` and
    ``gamma = 1 / (2 n)``.
    """

    mode: str = "sglb"
    T: int = 1000
    epsilon: float = 0.1
    max_depth: int = 6
    sample_rate: float | None = None
    beta: float | None = None
    gamma: float | None = None
    seed: int = 0
    min_rows_per_leaf: int = 1
    max_bins: int = 255

    def __post_init__(self):
        if self.mode not in ("sgb", "sglb"):
            raise ValidationError(f"mode must be 'sgb' or 'sglb', got {self.mode!r}")
        if self.T < 0:
            raise ValidationError("T must be >= 0")
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise ValidationError("epsilon must be a positive finite number")
        # TreeParams validates depth, leaf size and bins
        self.tree_params

    @property
    def tree_params(self) -> TreeParams:
        return TreeParams(self.max_depth, self.min_rows_per_leaf, self.max_bins)

    def resolved(self, n: int) -> "TrainConfig":
        """Fill mode defaults for a training set of ``n`` rows and validate."""
        if self.mode == "sgb":
            cfg = replace(
                self,
                sample_rate=0.5 if self.sample_rate is None else self.sample_rate,
                gamma=0.0 if self.gamma is None else self.gamma,
                beta=None,
            )
            if not 0 < cfg.sample_rate <= 1:
                raise ValidationError("SGB needs 0 < sample_rate <= 1")
            if cfg.gamma != 0:
                raise ValidationError("SGB does not use shrinkage; gamma must be 0")
            return cfg
        cfg = replace(
            self,
            sample_rate=1.0 if self.sample_rate is None else self.sample_rate,
            beta=float(n) if self.beta is None else float(self.beta),
            gamma=1.0 / (2 * n) if self.gamma is None else float(self.gamma),
        )
        if cfg.sample_rate != 1:
            raise ValidationError("SGLB uses every row; sample_rate must be 1")
        if not cfg.beta > 0:
            raise ValidationError("SGLB needs beta > 0")
        if not 0 <= cfg.gamma * cfg.epsilon < 1:
            raise ValidationError("SGLB needs 0 <= gamma * epsilon < 1")
        return cfg

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["beta"] is not None and math.isinf(d["beta"]):
            d["beta"] = "inf"
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if d.get("beta") == "inf":
            d["beta"] = math.inf
        return cls(**d)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


class EvaluationCounter:
    """Counts tree evaluations made by the prediction kernels."""

    def __init__(self):
        self._lock = threading.Lock()
        self.count = 0

    def add(self, k: int):
        with self._lock:
            self.count += int(k)

    def reset(self):
        with self._lock:
            self.count = 0


tree_evaluations = EvaluationCounter()


@dataclass(frozen=True, eq=False)
class GBMModel:
    loss: LossSpec
    trees: tuple
    epsilon: float
    gamma: float
    f0: np.ndarray
    n_features: int
    log_sigma_bounds: LogSigmaBounds = LogSigmaBounds()
    encoder: object = None
    provenance: dict = field(default_factory=dict)

    @property
    def T(self) -> int:
        return len(self.trees)

    @property
    def d_out(self) -> int:
        return self.loss.d_out

    @property
    def shrink(self) -> float:
        return 1.0 - self.gamma * self.epsilon

    def truncated(self, t: int) -> "GBMModel":
        """The model as it stood after ``t`` boosting iterations."""
        if not 0 <= t <= self.T:
            raise ValidationError(f"cannot truncate a {self.T}-tree model to {t} trees")
        return replace(self, trees=self.trees[:t])

    @cached_property
    def _packed(self):
        sizes = [tr.n_nodes for tr in self.trees]
        offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int32)
        if not self.trees:
            empty_i = np.zeros(0, np.int32)
            return empty_i, np.zeros(0), empty_i, empty_i, np.zeros((0, self.d_out)), empty_i
        feature = np.concatenate([tr.feature for tr in self.trees])
        threshold = np.concatenate([tr.threshold for tr in self.trees])
        left = np.concatenate([np.where(tr.left >= 0, tr.left + o, -1) for tr, o in zip(self.trees, offsets)])
        right = np.concatenate([np.where(tr.right >= 0, tr.right + o, -1) for tr, o in zip(self.trees, offsets)])
        value = np.concatenate([tr.value for tr in self.trees])
        return (
            feature.astype(np.int32),
            threshold,
            left.astype(np.int32),
            right.astype(np.int32),
            np.ascontiguousarray(value),
            offsets[:-1].copy(),
        )

    def partial_sums(self, X, checkpoints) -> np.ndarray:
        """``f0 s^T + sum_{i<=t} eps s^(T-i) tree_i(x)`` for each checkpoint ``t``.

        Here ``s = 1 - gamma * eps``. Every tree is evaluated once per row
        regardless of the number of checkpoints. Shape ``(len(checkpoints), n, d_out)``.
        """
        X = _as_rows(X, self.n_features)
        checkpoints = np.asarray(checkpoints, dtype=np.int64)
        if np.any(np.diff(checkpoints) < 0) or np.any(checkpoints < 0) or np.any(checkpoints > self.T):
            raise ValidationError("checkpoints must be ascending and within [0, T]")
        T = self.T
        s = self.shrink
        weights = self.epsilon * s ** np.arange(T - 1, -1, -1, dtype=np.float64)
        base = np.asarray(self.f0, dtype=np.float64) * s**T
        feature, threshold, left, right, value, roots = self._packed
        out, evals = _kernels.weighted_partial_sums(
            X, feature, threshold, left, right, value, roots, weights, base, checkpoints
        )
        tree_evaluations.add(evals)
        return out

    def staged_raw(self, X, checkpoints) -> np.ndarray:
        """Raw predictions of the truncated models at each checkpoint, in one pass.

        Uses ``theta^(t) = s^(t - T) * partial_sum_t``.
        """
        checkpoints = np.asarray(checkpoints, dtype=np.int64)
        sums = self.partial_sums(X, checkpoints)
        scale = self.shrink ** (checkpoints.astype(np.float64) - self.T)
        return sums * scale[:, None, None]


def _as_rows(X, n_features: int) -> np.ndarray:
    X = np.asarray(getattr(X, "values", X), dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.ndim != 2 or X.shape[1] != n_features:
        raise DataError(f"expected rows with {n_features} features, got shape {X.shape}")
    return np.ascontiguousarray(X)


def sigmoid(f):
    return expit(np.asarray(f, dtype=np.float64))


def natural_gradient_normal(mu, log_sigma, y) -> np.ndarray:
    """Fisher-preconditioned NLL gradient w.r.t. ``(mu, log sigma)``.

    ``(mu - y, 1/2 - 1/2 ((y - mu) / sigma)^2)``, stacked on the last axis.
    The caller is responsible for clamping ``log_sigma``.
    """
    mu, log_sigma, y = (np.asarray(a, dtype=np.float64) for a in (mu, log_sigma, y))
    if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(log_sigma)) and np.all(np.isfinite(y))):
        raise NumericError("non-finite input to the natural gradient")
    z = (y - mu) / np.exp(log_sigma)
    return np.stack(np.broadcast_arrays(mu - y, 0.5 - 0.5 * z * z), axis=-1)


def normal_nll_gradient(mu, log_sigma, y) -> np.ndarray:
    """Ordinary gradient of the Normal NLL w.r.t. ``(mu, log sigma)``."""
    mu, log_sigma, y = (np.asarray(a, dtype=np.float64) for a in (mu, log_sigma, y))
    sigma2 = np.exp(2 * log_sigma)
    return np.stack(np.broadcast_arrays((mu - y) / sigma2, 1.0 - (y - mu) ** 2 / sigma2), axis=-1)


def gradient_logistic(f, y):
    """d/df of the logistic loss: ``sigmoid(f) - y``."""
    return sigmoid(f) - np.asarray(y, dtype=np.float64)


def normal_nll(mu, sigma, y):
    mu, sigma, y = (np.asarray(a, dtype=np.float64) for a in (mu, sigma, y))
    return 0.5 * np.log(2 * np.pi * sigma**2) + (y - mu) ** 2 / (2 * sigma**2)


def bernoulli_nll(p, y):
    p = np.clip(np.asarray(p, dtype=np.float64), PROB_EPS, 1 - PROB_EPS)
    y = np.asarray(y, dtype=np.float64)
    return -(y * np.log(p) + (1 - y) * np.log1p(-p))


@dataclass(frozen=True, eq=False)
class Normal:
    mu: np.ndarray
    sigma: np.ndarray

    def nll(self, y):
        return normal_nll(self.mu, self.sigma, y)

    def params(self) -> np.ndarray:
        return np.stack(np.broadcast_arrays(self.mu, self.sigma), axis=-1)


@dataclass(frozen=True, eq=False)
class Bernoulli:
    p: np.ndarray

    def nll(self, y):
        return bernoulli_nll(self.p, y)

    def params(self) -> np.ndarray:
        return np.asarray(self.p)[..., None]


def distribution_from_raw(raw: np.ndarray, loss: LossSpec, bounds: LogSigmaBounds = LogSigmaBounds()):
    raw = np.asarray(raw, dtype=np.float64)
    if loss.kind == "normal_nll":
        return Normal(raw[..., 0], np.exp(bounds.clamp(raw[..., 1])))
    return Bernoulli(sigmoid(raw[..., 0]))


def initial_prediction(loss: LossSpec, y: np.ndarray) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if loss.kind == "normal_nll":
        return np.array([np.mean(y), np.log(np.std(y) + 1e-8)])
    rate = np.mean(y)
    with np.errstate(divide="ignore"):
        logit = np.log(rate) - np.log1p(-rate)
    return np.array([np.clip(logit, -10.0, 10.0)])


def loss_gradient(loss: LossSpec, F: np.ndarray, y: np.ndarray, bounds: LogSigmaBounds) -> np.ndarray:
    if loss.kind == "normal_nll":
        return natural_gradient_normal(F[:, 0], bounds.clamp(F[:, 1]), y)
    return gradient_logistic(F[:, 0], y)[:, None]


def train(
    X,
    y,
    config: TrainConfig,
    loss: LossSpec | None = None,
    *,
    encoder=None,
    bounds: LogSigmaBounds = LogSigmaBounds(),
    callback: Callable[[int, np.ndarray], None] | None = None,
) -> GBMModel:
    """Fit a GBDT by SGB (row subsampling) or SGLB (gradient noise plus shrinkage).

    Each iteration fits one tree to the negative gradient at the current
    predictions and applies ``F <- (1 - gamma eps) F + eps h``. ``callback``,
    if given, receives ``(t, F)`` after every update.
    """
    X = np.asarray(getattr(X, "values", X), dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = X.shape[0]
    if n < 1:
        raise DataError("cannot train on an empty dataset")
    if y.shape != (n,):
        raise DataError("y must be a vector with one entry per row of X")
    if loss is None:
        loss = LossSpec("normal_nll")
    if loss.kind == "logistic" and not np.all((y == 0) | (y == 1)):
        raise DataError("logistic loss needs 0/1 targets")
    cfg = config.resolved(n)
    params = cfg.tree_params
    binned = BinnedMatrix.fit(X, params.max_bins)
    f0 = initial_prediction(loss, y)
    F = np.tile(f0, (n, 1))
    eps = cfg.epsilon
    shrink = 1.0 - cfg.gamma * eps
    noise_sd = math.sqrt(2.0 / (cfg.beta * eps)) if cfg.mode == "sglb" else 0.0
    n_sub = max(0, math.ceil(cfg.sample_rate * n - 1e-9))
    all_rows = np.arange(n, dtype=np.int64)
    trees = []
    for t in range(1, cfg.T + 1):
        rng = stream(cfg.seed, t)
        with np.errstate(all="ignore"):
            targets = -loss_gradient(loss, F, y, bounds)
        if not np.all(np.isfinite(targets)):
            raise NumericError(f"non-finite gradient at iteration {t}")
        if cfg.mode == "sgb":
            if n_sub == 0:
                raise DataError("sample_rate selects no rows")
            rows = np.sort(rng.choice(n, size=n_sub, replace=False)) if n_sub < n else all_rows
            tree, leaf_of_row, split_bin = fit_binned(binned, targets[rows], rows, params)
            if n_sub < n:
                leaf_of_row = _kernels.route_binned(binned.bins, tree.feature, split_bin, tree.left, tree.right)
        else:
            targets = targets + noise_sd * rng.standard_normal(targets.shape)
            tree, leaf_of_row, _ = fit_binned(binned, targets, all_rows, params)
        step = tree.value[leaf_of_row]
        F = shrink * F + eps * step if shrink != 1.0 else F + eps * step
        trees.append(tree)
        if callback is not None:
            callback(t, F)
    provenance = {"mode": cfg.mode, "seed": cfg.seed, "config": cfg.to_dict(), "config_digest": cfg.digest()}
    return GBMModel(
        loss=loss,
        trees=tuple(trees),
        epsilon=eps,
        gamma=cfg.gamma,
        f0=f0,
        n_features=X.shape[1],
        log_sigma_bounds=bounds,
        encoder=encoder,
        provenance=provenance,
    )


def predict_raw(model: GBMModel, X) -> np.ndarray:
    """``f0 s^T + sum_i eps s^(T-i) tree_i(x)`` with ``s = 1 - gamma eps``.

    Returns ``(d_out,)`` for a single row, ``(n, d_out)`` for a matrix.
    """
    single = np.ndim(getattr(X, "values", X)) == 1
    out = model.partial_sums(X, [model.T])[0]
    return out[0] if single else out


def predict_distribution(model: GBMModel, X):
    return distribution_from_raw(predict_raw(model, X), model.loss, model.log_sigma_bounds)


def nll(model_or_distribution, y, X=None):
    """Per-row negative log-likelihood of ``y``.

    Pass a fitted distribution, or a model together with ``X``.
    """
    if isinstance(model_or_distribution, GBMModel):
        if X is None:
            raise ValidationError("nll of a model needs X")
        model_or_distribution = predict_distribution(model_or_distribution, X)
    return model_or_distribution.nll(y)
