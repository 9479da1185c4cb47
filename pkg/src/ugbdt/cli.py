"""``ugbdt`` command line: synthetic data, training (with the learning-rate x
depth grid), uncertainty scoring, OOD evaluation, test-set evaluation and
figure-data export.

Exit codes: 0 success, 2 validation error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import math
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .boosting import LossSpec, TrainConfig, train
from .data import Dataset, Schema, encode, fit_encoder, load_csv, load_schema, save_schema, split_dataset, write_csv
from .ensemble import Ensemble, member_predictions, train_ensemble
from .errors import DataError, UGBDTError, ValidationError
from .metrics import auc_roc, evaluate_split, prr
from .persistence import load_predictor, save_manifest, save_model
from .synthetic import (
    HEART_SCHEMA,
    HeartSpec,
    OodSpec,
    SpiralSpec,
    build_ood_set,
    generate_heart,
    generate_spiral,
    heart_grid_features,
    in_domain_statistics,
    spiral_features,
)
from .uncertainty import decompose

GRID_LEARNING_RATES = (0.001, 0.01, 0.1)
GRID_DEPTHS = (3, 4, 5, 6)


def fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_table(path, header, rows) -> None:
    """CSV with a header row; floats at full precision. ``path=None`` prints."""
    fh = sys.stdout if path is None else Path(path).open("w", newline="", encoding="utf-8")
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])
    finally:
        if path is not None:
            fh.close()


def schema_path_for(csv_path: str | Path) -> Path:
    return Path(csv_path).with_suffix(".schema")


def load_table(csv_path, schema_path=None, schema: Schema | None = None) -> Dataset:
    """A CSV plus its schema: explicit path, given Schema, or the sidecar."""
    if schema is None:
        schema = load_schema(schema_path or schema_path_for(csv_path))
    return load_csv(csv_path, schema)


def save_table(dataset: Dataset, csv_path: str | Path) -> None:
    write_csv(dataset, csv_path)
    save_schema(dataset.schema, schema_path_for(csv_path))


# ---------------------------------------------------------------- synth


def cmd_synth(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.kind == "heart":
        train_set, grid = generate_heart(HeartSpec(per_cell=args.per_cell), args.seed)
        save_table(train_set, out / "heart.csv")
        save_table(grid, out / "heart_grid.csv")
        mask = grid["masked"].astype(int).reshape(9, 9)
        write_table(out / "heart_mask.csv", [f"x2={j}" for j in range(9)], mask.tolist())
    else:
        spec = SpiralSpec(
            n_per_class=args.n_per_class,
            noise_sd=args.noise_sd,
            rotation_turns=args.rotation_turns,
            derived_features=not args.raw_features,
        )
        save_table(generate_spiral(spec, args.seed, args.positive_class), out / "spiral.csv")
    return 0


def cmd_split(args) -> int:
    data = load_table(args.data, args.schema)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, part in zip(("train", "valid", "test"), split_dataset(data, tuple(args.fractions), args.seed)):
        save_table(part, out / f"{name}.csv")
    return 0


# ---------------------------------------------------------------- train


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything ``train`` needs; defaults are 10 SGLB members of 1000 trees."""

    data: str
    out: str
    schema: str | None = None
    valid: str | None = None
    mode: str = "sglb"
    trees: int = 1000
    learning_rate: float = 0.1
    depth: int = 6
    sample_rate: float | None = None
    beta: float | None = None
    gamma: float | None = None
    members: int = 10
    seed: int = 0
    grid: bool = False
    learning_rates: tuple = GRID_LEARNING_RATES
    depths: tuple = GRID_DEPTHS

    def __post_init__(self):
        if self.members < 1:
            raise ValidationError("--members must be >= 1")
        if not self.learning_rates or not self.depths:
            raise ValidationError("grid search needs at least one learning rate and one depth")

    def train_config(self, epsilon=None, depth=None) -> TrainConfig:
        return TrainConfig(
            mode=self.mode,
            T=self.trees,
            epsilon=self.learning_rate if epsilon is None else epsilon,
            max_depth=self.depth if depth is None else depth,
            sample_rate=self.sample_rate,
            beta=self.beta,
            gamma=self.gamma,
            seed=self.seed,
        )


TRAIN_KEYS = {
    "data": str, "out": str, "schema": str, "valid": str, "mode": str, "trees": int,
    "learning_rate": float, "depth": int, "sample_rate": float, "beta": float, "gamma": float,
    "members": int, "seed": int, "grid": lambda s: s.strip().lower() in ("1", "true", "yes", "on"),
}


def experiment_from_args(args) -> ExperimentConfig:
    """Flags override an optional INI ``--config`` file (section ``[train]``)."""
    values = {}
    if args.config:
        parser = configparser.ConfigParser()
        if not parser.read(args.config, encoding="utf-8"):
            raise DataError(f"cannot read config file {args.config}")
        if parser.has_section("train"):
            for key, raw in parser.items("train"):
                key = key.replace("-", "_")
                if key not in TRAIN_KEYS:
                    raise ValidationError(f"unknown config key {key!r}")
                try:
                    values[key] = TRAIN_KEYS[key](raw)
                except ValueError:
                    raise ValidationError(f"bad value for {key}: {raw!r}") from None
    for key in TRAIN_KEYS:
        flag = getattr(args, key, None)
        if flag is not None and flag is not False:
            values[key] = flag
    for required in ("data", "out"):
        if required not in values:
            raise ValidationError(f"--{required} is required")
    return ExperimentConfig(**values)


def grid_search(exp: ExperimentConfig, X, y, X_valid, y_valid, loss, encoder):
    """One model per (learning rate, depth); returns rows of
    ``(epsilon, depth, valid_nll)`` and the best pair (ties: first in grid order)."""
    rows = []
    for eps in exp.learning_rates:
        for depth in exp.depths:
            model = train(X, y, exp.train_config(eps, depth), loss, encoder=encoder)
            score = evaluate_split(model, X_valid, y_valid)["NLL"]
            rows.append((float(eps), int(depth), score))
    finite = [r for r in rows if math.isfinite(r[2])]
    if not finite:
        raise DataError("every grid candidate produced a non-finite validation NLL")
    best = min(finite, key=lambda r: r[2])
    return rows, (best[0], best[1])


def cmd_train(args) -> int:
    exp = experiment_from_args(args)
    data = load_table(exp.data, exp.schema)
    encoder = fit_encoder(data)
    X = encode(data, encoder).values
    y = data.target
    loss = LossSpec.for_task(data.schema.task)
    out = Path(exp.out)
    out.mkdir(parents=True, exist_ok=True)

    if exp.grid:
        if exp.valid is None:
            raise ValidationError("--grid selects by validation NLL and needs --valid")
        valid = load_table(exp.valid, schema=data.schema)
        rows, (eps, depth) = grid_search(exp, X, y, encode(valid, encoder).values, valid.target, loss, encoder)
        write_table(out / "grid.csv", ["learning_rate", "depth", "valid_nll"], rows)
        exp = replace(exp, learning_rate=eps, depth=depth)

    ens = train_ensemble(X, y, exp.train_config(), exp.members, loss, encoder=encoder)
    paths = []
    for m, model in enumerate(ens.models):
        p = out / f"model_{m:03d}.json"
        save_model(model, p)
        paths.append(p.name)
    save_manifest(out / "manifest.json", paths, ens.provenance)
    if exp.valid is not None:
        valid = load_table(exp.valid, schema=data.schema)
        metrics = evaluate_split(ens, valid)
        write_table(out / "valid_metrics.csv", ["measure", "value"], metrics.items())
    return 0


# ---------------------------------------------------------------- scoring


def uncertainty_columns(ens: Ensemble, X) -> tuple[list[str], np.ndarray]:
    """Header and ``(n, k)`` matrix of TU, EDU and (ensembles only) KU."""
    report = decompose(member_predictions(ens, X), ens.loss.kind)
    if ens.M == 1:
        return ["TU", "EDU"], np.column_stack([report.total, report.expected_data])
    return ["TU", "EDU", "KU"], np.column_stack([report.total, report.expected_data, report.knowledge])


def _test_set(ens: Ensemble, csv_path, schema_path=None) -> Dataset:
    if ens.encoder is None:
        raise DataError("model file carries no encoder state")
    schema = load_schema(schema_path) if schema_path else ens.encoder.schema
    return load_csv(csv_path, schema)


def cmd_uncertainty(args) -> int:
    ens = load_predictor(args.model, args.virtual)
    data = _test_set(ens, args.data, args.schema)
    header, values = uncertainty_columns(ens, encode(data, ens.encoder).values)
    write_table(args.out, ["row_id"] + header, ([i] + list(r) for i, r in enumerate(values)))
    return 0


def prediction_errors(ens: Ensemble, X, y) -> np.ndarray:
    """Squared error of the mean prediction (regression) or 0/1 error."""
    mean = member_predictions(ens, X)[..., 0].mean(axis=0)
    if ens.loss.kind == "normal_nll":
        return (mean - y) ** 2
    return ((mean >= 0.5).astype(np.float64) != y).astype(np.float64)


def evaluation_table(ens: Ensemble, data: Dataset, uncertainty: dict | None = None) -> list[tuple[str, float]]:
    """``(measure, value)`` rows: NLL, RMSE or error rate, then PRR per
    uncertainty measure. ``uncertainty`` replaces the model's measures
    (a testing hook, e.g. for an oracle ranking)."""
    X = encode(data, ens.encoder).values
    y = data.target
    rows = list(evaluate_split(ens, X, y).items())
    if uncertainty is None:
        header, values = uncertainty_columns(ens, X)
        uncertainty = {h: values[:, i] for i, h in enumerate(header) if h in ("TU", "KU")}
    errors = prediction_errors(ens, X, y)
    for name, u in uncertainty.items():
        rows.append((f"PRR_{name}", prr(u, errors)))
    return rows


def cmd_evaluate(args) -> int:
    ens = load_predictor(args.model, args.virtual)
    data = _test_set(ens, args.test, args.schema)
    write_table(args.out, ["measure", "value"], evaluation_table(ens, data))
    return 0


def ood_table(ens: Ensemble, X_in, X_ood) -> list[tuple[str, float]]:
    """AUC-ROC with OOD as the positive class, per uncertainty measure."""
    header, u_in = uncertainty_columns(ens, X_in)
    _, u_ood = uncertainty_columns(ens, X_ood)
    labels = np.concatenate([np.zeros(len(u_in)), np.ones(len(u_ood))])
    return [
        (h, auc_roc(np.concatenate([u_in[:, i], u_ood[:, i]]), labels))
        for i, h in enumerate(header)
        if h in ("TU", "KU")
    ]


def cmd_ood_eval(args) -> int:
    ens = load_predictor(args.model, args.virtual)
    if args.heart_grid:
        grid = load_table(args.heart_grid, args.heart_grid_schema)
        masked = grid["masked"].astype(int) == 1
        X = encode(heart_grid_features(grid), ens.encoder).values
        rows = ood_table(ens, X[~masked], X[masked])
    else:
        if args.test is None or args.pool is None:
            raise ValidationError("ood-eval needs --test and --pool, or --heart-grid")
        test = _test_set(ens, args.test, args.schema)
        pool = load_table(args.pool, args.pool_schema)
        ref = load_csv(args.train, test.schema) if args.train else test
        stats, cats = in_domain_statistics(ref)
        ood = build_ood_set(OodSpec(pool, test.schema, stats, cats, test.n, args.seed))
        rows = ood_table(ens, encode(test, ens.encoder).values, encode(ood, ens.encoder).values)
    write_table(args.out, ["measure", "auc_roc"], rows)
    return 0


# ---------------------------------------------------------------- figure data


def heart_field(ens: Ensemble) -> tuple[list[str], list[list]]:
    _, grid = generate_heart(HeartSpec(per_cell=0), 0)
    feats = heart_grid_features(grid)
    X = encode(feats, ens.encoder).values
    params = member_predictions(ens, X)
    header, u = uncertainty_columns(ens, X)
    mu = params[..., 0].mean(axis=0)
    rows = [[int(a), int(b), m] + list(r) for a, b, m, r in zip(feats["x1"], feats["x2"], mu, u)]
    return ["x1", "x2", "mean"] + header, rows


def plane_field(ens: Ensemble, extent: float, resolution: int) -> tuple[list[str], list[list]]:
    schema = ens.encoder.schema
    if schema.of_kind("categorical"):
        raise ValidationError("plane figure data needs an all-numeric model (e.g. spiral)")
    axis = np.linspace(-extent, extent, resolution)
    gx, gy = np.meshgrid(axis, axis, indexing="ij")
    feats = spiral_features(gx.ravel(), gy.ravel())
    missing = [c for c in schema.of_kind("numeric") if c not in feats]
    if missing:
        raise ValidationError(f"cannot synthesize features {missing} on a plane")
    n = gx.size
    cols = {c: feats[c] for c in schema.of_kind("numeric")}
    cols[schema.target] = np.zeros(n)
    for c in schema.of_kind("ignored"):
        cols[c] = np.full(n, "", dtype=object)
    X = encode(Dataset(schema, cols), ens.encoder).values
    mean = member_predictions(ens, X)[..., 0].mean(axis=0)
    header, u = uncertainty_columns(ens, X)
    rows = [[a, b, m] + list(r) for a, b, m, r in zip(gx.ravel(), gy.ravel(), mean, u)]
    return ["x1", "x2", "mean"] + header, rows


def cmd_figure_data(args) -> int:
    ens = load_predictor(args.model, args.virtual)
    if ens.encoder is None:
        raise DataError("model file carries no encoder state")
    if args.kind == "heart":
        if ens.encoder.schema != HEART_SCHEMA:
            raise DataError("heart figure data needs a model trained on heart data")
        header, rows = heart_field(ens)
    else:
        if args.resolution < 2 or not args.extent > 0:
            raise ValidationError("--resolution must be >= 2 and --extent > 0")
        header, rows = plane_field(ens, args.extent, args.resolution)
    write_table(args.out, header, rows)
    return 0


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ugbdt", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic dataset")
    s.add_argument("kind", choices=("heart", "spiral"))
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--per-cell", type=int, default=1000, help="heart: rows per unmasked cell")
    s.add_argument("--n-per-class", type=int, default=2000, help="spiral: points per arm")
    s.add_argument("--noise-sd", type=float, default=0.02)
    s.add_argument("--rotation-turns", type=float, default=1.75)
    s.add_argument("--positive-class", type=int, default=0, help="spiral arm labelled 1")
    s.add_argument("--raw-features", action="store_true", help="spiral: only x1, x2")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("split", help="seeded train/valid/test split")
    s.add_argument("--data", required=True)
    s.add_argument("--schema")
    s.add_argument("--fractions", type=float, nargs=3, default=(0.65, 0.15, 0.20))
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_split)

    s = sub.add_parser("train", help="train a model or ensemble")
    s.add_argument("--config", help="INI file with a [train] section")
    s.add_argument("--data")
    s.add_argument("--schema")
    s.add_argument("--valid")
    s.add_argument("--mode", choices=("sgb", "sglb"))
    s.add_argument("--trees", type=int)
    s.add_argument("--learning-rate", type=float)
    s.add_argument("--depth", type=int)
    s.add_argument("--sample-rate", type=float)
    s.add_argument("--beta", type=float)
    s.add_argument("--gamma", type=float)
    s.add_argument("--members", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--grid", action="store_true", help="pick learning rate and depth by validation NLL")
    s.add_argument("--out")
    s.set_defaults(func=cmd_train)

    def scoring(name, help_text, func):
        s = sub.add_parser(name, help=help_text)
        s.add_argument("--model", required=True, help="model file or manifest")
        s.add_argument("--virtual", type=int, metavar="K", help="virtual ensemble with stride K")
        s.add_argument("--schema", help="schema of the input CSV (default: the model's)")
        s.add_argument("--out", help="output CSV (default: stdout)")
        s.set_defaults(func=func)
        return s

    s = scoring("uncertainty", "per-row TU/EDU/KU", cmd_uncertainty)
    s.add_argument("--data", required=True)
    s = scoring("evaluate", "NLL, RMSE or error rate, and PRR", cmd_evaluate)
    s.add_argument("--test", required=True)
    s = scoring("ood-eval", "AUC-ROC of uncertainty for OOD detection", cmd_ood_eval)
    s.add_argument("--test")
    s.add_argument("--pool")
    s.add_argument("--pool-schema")
    s.add_argument("--train", help="in-domain training CSV for normalization (default: the test set)")
    s.add_argument("--heart-grid", help="heart grid CSV: masked vs unmasked cells")
    s.add_argument("--heart-grid-schema")
    s.add_argument("--seed", type=int, default=0)
    s = scoring("figure-data", "uncertainty fields on a grid for plotting", cmd_figure_data)
    s.add_argument("kind", choices=("heart", "plane"))
    s.add_argument("--extent", type=float, default=2.0)
    s.add_argument("--resolution", type=int, default=101)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UGBDTError as exc:
        print(f"ugbdt: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"ugbdt: error: {exc}", file=sys.stderr)
        return DataError.exit_code


if __name__ == "__main__":
    sys.exit(main())
