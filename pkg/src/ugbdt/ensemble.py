"""True ensembles of independently seeded models and virtual ensembles
carved from the second half of one boosting trajectory."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .boosting import GBMModel, LossSpec, TrainConfig, distribution_from_raw, train
from .errors import ValidationError

PROVENANCES = ("independent_sgb", "independent_sglb", "virtual_sglb")


def worker_count() -> int:
    """Worker threads allowed by ``UGBDT_THREADS`` (default: all CPUs)."""
    raw = os.environ.get("UGBDT_THREADS", "").strip()
    if raw:
        try:
            n = int(raw)
        except ValueError:
            raise ValidationError(f"UGBDT_THREADS must be an integer, got {raw!r}") from None
        if n < 1:
            raise ValidationError("UGBDT_THREADS must be >= 1")
        return n
    return os.cpu_count() or 1


def virtual_checkpoints(T: int, K: int) -> list[int]:
    """Iterations ``K t`` for ``floor(T / 2K) < t <= floor(T / K)``.

    T=1000, K=50 gives 550, 600, ..., 1000.
    """
    if K < 1:
        raise ValidationError("virtual stride K must be >= 1")
    if K > T:
        raise ValidationError(f"virtual stride K={K} exceeds the model's {T} trees")
    lo, hi = T // (2 * K), T // K
    checkpoints = [K * t for t in range(lo + 1, hi + 1)]
    if not checkpoints:
        raise ValidationError("empty virtual checkpoint set")
    return checkpoints


@dataclass(frozen=True, eq=False)
class Ensemble:
    """``models`` holds every member for true ensembles, or the single source
    model for a virtual one (then ``checkpoints`` lists its members)."""

    models: tuple
    provenance: str
    checkpoints: tuple | None = None

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise ValidationError(f"unknown provenance {self.provenance!r}")
        if not self.models:
            raise ValidationError("an ensemble needs at least one member")
        kinds = {m.loss.kind for m in self.models}
        if len(kinds) != 1:
            raise ValidationError("ensemble members disagree on the loss")
        if self.is_virtual and (len(self.models) != 1 or not self.checkpoints):
            raise ValidationError("a virtual ensemble wraps one model and a checkpoint list")

    @property
    def is_virtual(self) -> bool:
        return self.provenance == "virtual_sglb"

    @property
    def M(self) -> int:
        return len(self.checkpoints) if self.is_virtual else len(self.models)

    @property
    def loss(self) -> LossSpec:
        return self.models[0].loss

    @property
    def encoder(self):
        return self.models[0].encoder

    def raw_predictions(self, X) -> np.ndarray:
        """Raw outputs of every member, shape ``(M, n, d_out)``."""
        if self.is_virtual:
            return self.models[0].staged_raw(X, self.checkpoints)
        return np.stack([m.partial_sums(X, [m.T])[0] for m in self.models])


def _provenance_for(mode: str) -> str:
    return "independent_sgb" if mode == "sgb" else "independent_sglb"


def train_ensemble(X, y, config: TrainConfig, M: int, loss: LossSpec | None = None, *, encoder=None, workers: int | None = None) -> Ensemble:
    """Train ``M`` models with seeds ``config.seed + m``.

    Members train concurrently on up to ``workers`` threads (default from
    ``UGBDT_THREADS``); results do not depend on the thread count.
    """
    if M < 1:
        raise ValidationError("ensemble size M must be >= 1")
    configs = [replace(config, seed=config.seed + m) for m in range(M)]
    workers = min(worker_count() if workers is None else workers, M)

    def fit(cfg):
        return train(X, y, cfg, loss, encoder=encoder)

    if workers <= 1:
        models = [fit(c) for c in configs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            models = list(pool.map(fit, configs))
    return Ensemble(tuple(models), _provenance_for(config.mode))


def single(model: GBMModel) -> Ensemble:
    """Wrap one model as a one-member ensemble."""
    return Ensemble((model,), _provenance_for(model.provenance.get("mode", "sglb")))


def virtual_members(model: GBMModel, K: int = 50) -> Ensemble:
    """Virtual ensemble of the truncated models at every ``K``-th iteration in
    the second half of training.

    Member ``t`` is ``(1 - gamma eps)^(t - T)`` times the stored partial sum,
    which equals the model truncated to its first ``t`` trees.
    """
    checkpoints = virtual_checkpoints(model.T, K)
    return Ensemble((model,), "virtual_sglb", tuple(checkpoints))


def member_predictions(ensemble: Ensemble, X) -> np.ndarray:
    """Distribution parameters of every member: ``(M, n, 2)`` holding
    ``(mu, sigma)`` for regression, ``(M, n, 1)`` holding ``p`` for
    classification. A single row drops the ``n`` axis."""
    single_row = np.ndim(getattr(X, "values", X)) == 1
    raw = ensemble.raw_predictions(X)
    bounds = ensemble.models[0].log_sigma_bounds
    params = distribution_from_raw(raw, ensemble.loss, bounds).params()
    return params[:, 0] if single_row else params


def predictive_posterior_class(ensemble: Ensemble, X) -> np.ndarray:
    """Mean member probability of the positive class."""
    if ensemble.loss.kind != "logistic":
        raise ValidationError("predictive_posterior_class needs a classification ensemble")
    return member_predictions(ensemble, X)[..., 0].mean(axis=0)
