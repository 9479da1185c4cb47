"""Prediction quality (NLL, RMSE, error rate) and uncertainty quality
(AUC-ROC for OOD detection, prediction-rejection ratio for error detection)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp
from scipy.stats import rankdata

from .boosting import GBMModel, bernoulli_nll, normal_nll
from .data import Dataset, encode
from .ensemble import Ensemble, member_predictions, single
from .errors import DataError, ValidationError


def _pair(a, b, name_a="predictions", name_b="targets"):
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if len(a) != len(b):
        raise ValidationError(f"{name_a} and {name_b} differ in length ({len(a)} vs {len(b)})")
    if len(a) == 0:
        raise ValidationError("empty input")
    return a, b


def rmse(mu, y) -> float:
    mu, y = _pair(mu, y)
    return float(np.sqrt(np.mean((mu - y) ** 2)))


def error_rate(p, y) -> float:
    """Misclassification rate; ``p == 0.5`` predicts class 1."""
    p, y = _pair(p, y, "probabilities", "labels")
    return float(np.mean((p >= 0.5).astype(np.float64) != y))


def auc_roc(scores, labels) -> float:
    """Mann-Whitney AUC: share of (positive, negative) pairs with the positive
    scored higher, ties counting one half."""
    s, y = _pair(scores, labels, "scores", "labels")
    pos = y == 1
    n_pos = int(pos.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValidationError("AUC needs both positive and negative labels")
    ranks = rankdata(s)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2
    return float(u / (n_pos * n_neg))


@dataclass(frozen=True, eq=False)
class RejectionCurve:
    """Mean error of the retained points after rejecting ``fractions[j]`` of
    them; the fully rejected end (``r = 1``) is defined as 0."""

    fractions: np.ndarray
    retained_error: np.ndarray

    def area(self) -> float:
        return float(np.trapezoid(self.retained_error, self.fractions))


def rejection_curve(order: np.ndarray, errors: np.ndarray) -> RejectionCurve:
    """Curve for rejecting points in ``order`` (first rejected first)."""
    e = np.asarray(errors, dtype=np.float64)
    n = len(e)
    rejected = np.concatenate([[0.0], np.cumsum(e[order])])
    remaining = n - np.arange(n + 1)
    retained = np.zeros(n + 1)
    retained[:-1] = (e.sum() - rejected[:-1]) / remaining[:-1]
    return RejectionCurve(np.arange(n + 1) / n, retained)


def rejection_order(u) -> np.ndarray:
    """Highest ``u`` first; ties in ascending index order."""
    u = np.asarray(u, dtype=np.float64)
    return np.lexsort((np.arange(len(u)), -u))


def prr(uncertainties, errors) -> float:
    """Prediction-rejection ratio in percent: 100 for the error-ranked oracle,
    0 in expectation for a random ranking."""
    u, e = _pair(uncertainties, errors, "uncertainties", "errors")
    if len(u) < 2:
        raise ValidationError("PRR needs at least two points")
    if np.any(e < 0):
        raise ValidationError("errors must be non-negative")
    n = len(e)
    ar_unc = rejection_curve(rejection_order(u), e).area()
    ar_orc = rejection_curve(rejection_order(e), e).area()
    fractions = np.arange(n + 1) / n
    random = np.full(n + 1, e.mean())
    random[-1] = 0.0
    ar_rnd = float(np.trapezoid(random, fractions))
    if ar_rnd == ar_orc:
        return 0.0
    return float(100.0 * (ar_rnd - ar_unc) / (ar_rnd - ar_orc))


def mixture_nll(member_params: np.ndarray, y) -> np.ndarray:
    """Per-row NLL of the equal-weight mixture of members (axis 0)."""
    y = np.asarray(y, dtype=np.float64)
    M = member_params.shape[0]
    if member_params.shape[-1] == 2:
        log_p = -normal_nll(member_params[..., 0], member_params[..., 1], y)
        return -(logsumexp(log_p, axis=0) - np.log(M))
    return bernoulli_nll(member_params[..., 0].mean(axis=0), y)


def evaluate_split(predictor, test, y=None) -> dict:
    """NLL plus RMSE (regression) or error rate (classification) of a model
    or ensemble. Ensembles are scored through their predictive posterior.

    ``test`` is a Dataset (encoded with the predictor's encoder) or an
    encoded matrix together with ``y``.
    """
    ens = single(predictor) if isinstance(predictor, GBMModel) else predictor
    if not isinstance(ens, Ensemble):
        raise ValidationError("predictor must be a GBMModel or an Ensemble")
    if isinstance(test, Dataset):
        if ens.encoder is None:
            raise ValidationError("predictor carries no encoder; pass an encoded matrix and y")
        if test.schema.task != ens.loss.task:
            raise DataError(f"{test.schema.task} data given to a {ens.loss.task} predictor")
        y = test.target
        test = encode(test, ens.encoder)
    if y is None:
        raise ValidationError("y is required with an encoded matrix")
    params = member_predictions(ens, test)
    y = np.asarray(y, dtype=np.float64)
    out = {"NLL": float(np.mean(mixture_nll(params, y)))}
    if ens.loss.kind == "normal_nll":
        out["RMSE"] = rmse(params[..., 0].mean(axis=0), y)
    else:
        out["error_rate"] = error_rate(params[..., 0].mean(axis=0), y)
    return out
