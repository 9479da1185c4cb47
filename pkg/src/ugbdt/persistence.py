"""JSON model files and ensemble manifests.

Floats are written with Python's shortest round-trip repr and keys in a fixed
order, so save -> load -> save reproduces the same bytes and a loaded model
predicts bit-identically to the original.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .boosting import GBMModel, LogSigmaBounds, LossSpec
from .data import Encoder
from .ensemble import Ensemble, single, virtual_members
from .errors import DataError
from .tree import DecisionTree

FORMAT_VERSION = 1


def _dump(obj, path: str | Path) -> None:
    text = json.dumps(obj, sort_keys=True, indent=1, allow_nan=False) + "\n"
    Path(path).write_text(text, encoding="utf-8")


def _read(path: str | Path) -> dict:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(obj, dict):
        raise DataError(f"{path}: expected a JSON object")
    return obj


def _jsonable(value):
    """Provenance values with non-finite floats spelled as strings."""
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (float, np.floating)) and not math.isfinite(value):
        return repr(float(value))
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    return value


def model_to_dict(model: GBMModel) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "loss": model.loss.kind,
        "T": model.T,
        "epsilon": float(model.epsilon),
        "gamma": float(model.gamma),
        "f0": [float(v) for v in model.f0],
        "n_features": int(model.n_features),
        "log_sigma_bounds": [float(model.log_sigma_bounds.lo), float(model.log_sigma_bounds.hi)],
        "encoder": None if model.encoder is None else model.encoder.to_dict(),
        "provenance": _jsonable(model.provenance),
        "trees": [t.to_preorder() for t in model.trees],
    }


def model_from_dict(d: dict) -> GBMModel:
    version = d.get("format_version")
    if version != FORMAT_VERSION:
        raise DataError(f"unsupported model format_version {version!r}")
    try:
        loss = LossSpec(d["loss"])
        n_features = int(d["n_features"])
        trees = tuple(DecisionTree.from_preorder(t, n_features, loss.d_out) for t in d["trees"])
        if len(trees) != d["T"]:
            raise DataError(f"model declares T={d['T']} but holds {len(trees)} trees")
        return GBMModel(
            loss=loss,
            trees=trees,
            epsilon=float(d["epsilon"]),
            gamma=float(d["gamma"]),
            f0=np.array(d["f0"], dtype=np.float64),
            n_features=n_features,
            log_sigma_bounds=LogSigmaBounds(*d["log_sigma_bounds"]),
            encoder=None if d["encoder"] is None else Encoder.from_dict(d["encoder"]),
            provenance=d.get("provenance", {}),
        )
    except (KeyError, TypeError, IndexError) as exc:
        raise DataError(f"malformed model file: {exc!r}") from exc


def save_model(model: GBMModel, path: str | Path) -> None:
    _dump(model_to_dict(model), path)


def load_model(path: str | Path) -> GBMModel:
    return model_from_dict(_read(path))


def save_manifest(path: str | Path, member_paths, provenance: str, virtual_K: int | None = None) -> None:
    """Member paths are stored relative to the manifest's directory."""
    base = Path(path).parent
    rel = [Path(p).relative_to(base).as_posix() if Path(p).is_absolute() else Path(p).as_posix() for p in member_paths]
    doc = {"format_version": FORMAT_VERSION, "kind": "manifest", "provenance": provenance}
    if virtual_K is not None:
        if len(rel) != 1:
            raise DataError("a virtual manifest references exactly one model")
        doc["model"] = rel[0]
        doc["K"] = int(virtual_K)
    else:
        doc["members"] = rel
    _dump(doc, path)


def load_predictor(path: str | Path, virtual_K: int | None = None) -> Ensemble:
    """Load a model file or manifest as an Ensemble.

    A bare model file becomes a one-member ensemble; ``virtual_K`` turns a
    single model into a virtual ensemble with that stride.
    """
    doc = _read(path)
    base = Path(path).parent
    if doc.get("kind") != "manifest":
        ens = single(model_from_dict(doc))
    elif "K" in doc:
        model = load_model(base / doc["model"])
        ens = virtual_members(model, int(doc["K"]))
    else:
        if doc.get("format_version") != FORMAT_VERSION:
            raise DataError(f"unsupported manifest format_version {doc.get('format_version')!r}")
        models = tuple(load_model(base / p) for p in doc["members"])
        ens = Ensemble(models, doc["provenance"])
    if virtual_K is not None:
        if ens.is_virtual or ens.M != 1:
            raise DataError("--virtual needs a single model, not an ensemble")
        ens = virtual_members(ens.models[0], virtual_K)
    return ens
