"""Total / expected-data / knowledge uncertainty of ensemble predictions.

Classification uses entropies (nats) and mutual information; regression uses
the law of total variance over members' Normal predictions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .boosting import PROB_EPS, Bernoulli, Normal
from .ensemble import member_predictions
from .errors import ValidationError


@dataclass(frozen=True, eq=False)
class UncertaintyReport:
    """Per-input measures. ``knowledge`` is ``None`` for single models.

    ``total`` is stored as ``expected_data + knowledge`` so the identity holds
    exactly in floating point.
    """

    total: np.ndarray
    expected_data: np.ndarray
    knowledge: np.ndarray | None
    kind: str  # "entropy_nats" | "variance"


def binary_entropy(p) -> np.ndarray:
    p = np.clip(np.asarray(p, dtype=np.float64), PROB_EPS, 1 - PROB_EPS)
    return -(p * np.log(p) + (1 - p) * np.log1p(-p))


def entropy_decomposition(member_probs) -> UncertaintyReport:
    """Mutual-information split for members' positive-class probabilities.

    Members run along axis 0.
    """
    p = np.asarray(member_probs, dtype=np.float64)
    if p.ndim == 0 or p.shape[0] == 0:
        raise ValidationError("need at least one ensemble member")
    if np.any((p < 0) | (p > 1)) or not np.all(np.isfinite(p)):
        raise ValidationError("member probabilities must lie in [0, 1]")
    p = np.clip(p, PROB_EPS, 1 - PROB_EPS)
    entropy_of_mean = binary_entropy(p.mean(axis=0))
    expected = binary_entropy(p).mean(axis=0)
    knowledge = entropy_of_mean - expected
    return UncertaintyReport(expected + knowledge, expected, knowledge, "entropy_nats")


def variance_decomposition(member_params) -> UncertaintyReport:
    """Law-of-total-variance split for members' ``(mu, sigma)`` (last axis).

    Knowledge is the population variance of the means; expected data
    uncertainty is the mean of ``sigma^2``.
    """
    params = np.asarray(member_params, dtype=np.float64)
    if params.ndim < 2 or params.shape[0] == 0 or params.shape[-1] != 2:
        raise ValidationError("expected member rows of (mu, sigma)")
    mu, sigma = params[..., 0], params[..., 1]
    if not np.all(sigma > 0):
        raise ValidationError("member sigma must be positive")
    mean_mu = mu.mean(axis=0)
    knowledge = ((mean_mu - mu) ** 2).mean(axis=0)
    expected = (sigma**2).mean(axis=0)
    return UncertaintyReport(expected + knowledge, expected, knowledge, "variance")


def single_model_measures(distribution) -> UncertaintyReport:
    """A lone model only yields total uncertainty: entropy or ``sigma^2``."""
    if isinstance(distribution, Bernoulli):
        h = binary_entropy(distribution.p)
        return UncertaintyReport(h, h, None, "entropy_nats")
    if isinstance(distribution, Normal):
        v = np.asarray(distribution.sigma, dtype=np.float64) ** 2
        return UncertaintyReport(v, v, None, "variance")
    raise ValidationError(f"unsupported distribution {type(distribution).__name__}")


def decompose(member_params: np.ndarray, loss_kind: str) -> UncertaintyReport:
    """Dispatch on the loss; ``member_params`` as from ``member_predictions``."""
    if loss_kind == "logistic":
        return entropy_decomposition(member_params[..., 0])
    return variance_decomposition(member_params)


def score_dataset(ensemble, X) -> np.ndarray:
    """Rows of ``(TU, EDU, KU)`` for every input."""
    X = np.asarray(getattr(X, "values", X), dtype=np.float64)
    if X.ndim == 2 and X.shape[0] == 0:
        return np.zeros((0, 3))
    params = member_predictions(ensemble, X if X.ndim == 2 else X.reshape(1, -1))
    report = decompose(params, ensemble.loss.kind)
    return np.column_stack([report.total, report.expected_data, report.knowledge])
