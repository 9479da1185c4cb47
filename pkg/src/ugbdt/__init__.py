"""Probabilistic gradient-boosted decision trees (SGB and SGLB) with true and
virtual ensembles and total / data / knowledge uncertainty decomposition."""

from .boosting import (
    GBMModel,
    LossSpec,
    TrainConfig,
    natural_gradient_normal,
    nll,
    predict_distribution,
    predict_raw,
    train,
)
from .data import Dataset, Schema, encode, fit_encoder, load_csv, load_schema, split_dataset
from .ensemble import Ensemble, member_predictions, train_ensemble, virtual_members
from .errors import DataError, NumericError, UGBDTError, ValidationError
from .metrics import auc_roc, error_rate, evaluate_split, prr, rmse
from .persistence import load_model, load_predictor, save_model
from .tree import DecisionTree, TreeParams, fit_tree, predict_tree
from .uncertainty import UncertaintyReport, decompose, entropy_decomposition, score_dataset, variance_decomposition

__version__ = "0.1.0"
