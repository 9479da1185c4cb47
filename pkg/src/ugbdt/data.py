"""Tabular datasets: schema, CSV ingestion, categorical encoding, splitting."""

from __future__ import annotations

import configparser
import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import DataError, ValidationError

KINDS = ("numeric", "categorical", "target", "ignored")
TASKS = ("regression", "binary_classification")


@dataclass(frozen=True)
class Schema:
    columns: tuple[tuple[str, str], ...]
    task: str

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple((str(n), str(k)) for n, k in self.columns))
        if self.task not in TASKS:
            raise ValidationError(f"unknown task {self.task!r}; expected one of {TASKS}")
        names = [n for n, _ in self.columns]
        if len(set(names)) != len(names):
            raise ValidationError("duplicate column names in schema")
        for name, kind in self.columns:
            if kind not in KINDS:
                raise ValidationError(f"column {name!r}: unknown kind {kind!r}")
        n_target = sum(k == "target" for _, k in self.columns)
        if n_target != 1:
            raise ValidationError(f"schema needs exactly one target column, found {n_target}")
        if not self.features:
            raise ValidationError("schema needs at least one numeric or categorical feature")

    @property
    def names(self) -> list[str]:
        return [n for n, _ in self.columns]

    @property
    def target(self) -> str:
        return next(n for n, k in self.columns if k == "target")

    @property
    def features(self) -> list[str]:
        return [n for n, k in self.columns if k in ("numeric", "categorical")]

    def kind(self, name: str) -> str:
        return dict(self.columns)[name]

    def of_kind(self, kind: str) -> list[str]:
        return [n for n, k in self.columns if k == kind]


def load_schema(path: str | Path) -> Schema:
    """Read a schema sidecar.

    The file has a ``[schema]`` section holding ``task`` and a ``[columns]``
    section mapping column names, in file order, to their kinds::

        [schema]
        task = regression

        [columns]
        x1 = categorical
        y = target
    """
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    path = Path(path)
    if not path.is_file():
        raise DataError(f"schema file not found: {path}")
    try:
        parser.read(path, encoding="utf-8")
        task = parser["schema"]["task"].strip()
        columns = tuple((name, kind.strip()) for name, kind in parser["columns"].items())
    except (KeyError, configparser.Error) as exc:
        raise DataError(f"{path}: malformed schema file ({exc})") from exc
    return Schema(columns, task)


def save_schema(schema: Schema, path: str | Path) -> None:
    lines = ["[schema]", f"task = {schema.task}", "", "[columns]"]
    lines += [f"{name} = {kind}" for name, kind in schema.columns]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


@dataclass(frozen=True, eq=False)
class Dataset:
    """Column-oriented table.

    Numeric and target columns are float64 arrays; categorical and ignored
    columns hold strings (object arrays).
    """

    schema: Schema
    columns: Mapping[str, np.ndarray]

    def __post_init__(self):
        cols = {}
        lengths = set()
        for name, kind in self.schema.columns:
            if name not in self.columns:
                raise DataError(f"missing column {name!r}")
            values = np.asarray(self.columns[name])
            if kind in ("numeric", "target"):
                values = values.astype(np.float64)
                if not np.all(np.isfinite(values)):
                    raise DataError(f"column {name!r} contains non-finite values")
            else:
                values = values.astype(str).astype(object)
            values.setflags(write=False)
            cols[name] = values
            lengths.add(len(values))
        if len(lengths) > 1:
            raise DataError(f"columns have different lengths: {sorted(lengths)}")
        object.__setattr__(self, "columns", cols)
        if self.schema.task == "binary_classification":
            y = cols[self.schema.target]
            if not np.all((y == 0) | (y == 1)):
                raise DataError("binary_classification target must be 0 or 1")

    @property
    def n(self) -> int:
        return len(self.columns[self.schema.names[0]])

    def __len__(self) -> int:
        return self.n

    @property
    def target(self) -> np.ndarray:
        return self.columns[self.schema.target]

    def __getitem__(self, name: str) -> np.ndarray:
        return self.columns[name]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.schema, {k: v[idx] for k, v in self.columns.items()})


def load_csv(path: str | Path, schema: Schema) -> Dataset:
    """Parse a comma-separated file whose header matches ``schema`` in order.

    Errors carry the file line number and column name.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"data file not found: {path}")
    names = schema.names
    kinds = [k for _, k in schema.columns]
    raw: list[list] = [[] for _ in names]
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty file")
        if [h.strip() for h in header] != names:
            raise DataError(f"{path}: header {header} does not match schema columns {names}")
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != len(names):
                raise DataError(f"{path}: line {line}: expected {len(names)} cells, got {len(row)}")
            for j, (cell, kind) in enumerate(zip(row, kinds)):
                cell = cell.strip()
                if kind == "ignored":
                    raw[j].append(cell)
                    continue
                if cell == "":
                    raise DataError(f"{path}: line {line}, column {names[j]!r}: missing value")
                if kind == "categorical":
                    raw[j].append(cell)
                    continue
                try:
                    value = float(cell)
                except ValueError:
                    value = math.nan
                if not math.isfinite(value):
                    raise DataError(
                        f"{path}: line {line}, column {names[j]!r}: "
                        f"cannot parse {cell!r} as a finite number"
                    )
                raw[j].append(value)
    columns = {}
    for name, kind, values in zip(names, kinds, raw):
        if kind in ("numeric", "target"):
            columns[name] = np.array(values, dtype=np.float64)
        else:
            columns[name] = np.array(values, dtype=object)
    try:
        return Dataset(schema, columns)
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from exc


def format_cell(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(dataset: Dataset, path: str | Path) -> None:
    names = dataset.schema.names
    cols = [dataset.columns[n] for n in names]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(names)
        for i in range(dataset.n):
            writer.writerow([format_cell(c[i]) for c in cols])


@dataclass(frozen=True)
class CategoricalEncoding:
    mode: str  # "one_hot" | "target_mean"
    vocabulary: tuple[str, ...] = ()
    sums: Mapping[str, float] = field(default_factory=dict)
    counts: Mapping[str, int] = field(default_factory=dict)
    prior: float = 0.0
    smoothing: float = 1.0

    def target_mean(self, category: str) -> float:
        if category not in self.counts:
            return self.prior
        s = self.smoothing
        return (self.sums[category] + s * self.prior) / (self.counts[category] + s)


@dataclass(frozen=True)
class Encoder:
    schema: Schema
    categorical: Mapping[str, CategoricalEncoding]

    def output_columns(self) -> tuple[list[str], list[str]]:
        """Encoded column names and the source column of each."""
        names, origin = [], []
        for col in self.schema.features:
            if self.schema.kind(col) == "numeric":
                names.append(col)
                origin.append(col)
                continue
            enc = self.categorical[col]
            if enc.mode == "one_hot":
                names += [f"{col}={v}" for v in enc.vocabulary]
                origin += [col] * len(enc.vocabulary)
            else:
                names.append(f"{col}:target_mean")
                origin.append(col)
        return names, origin

    def to_dict(self) -> dict:
        cats = {}
        for col, enc in self.categorical.items():
            entry = {"mode": enc.mode}
            if enc.mode == "one_hot":
                entry["vocabulary"] = list(enc.vocabulary)
            else:
                entry["sums"] = {k: float(enc.sums[k]) for k in sorted(enc.sums)}
                entry["counts"] = {k: int(enc.counts[k]) for k in sorted(enc.counts)}
                entry["prior"] = float(enc.prior)
                entry["smoothing"] = float(enc.smoothing)
            cats[col] = entry
        return {
            "schema": {"task": self.schema.task, "columns": [list(c) for c in self.schema.columns]},
            "categorical": cats,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Encoder":
        schema = Schema(tuple(tuple(c) for c in d["schema"]["columns"]), d["schema"]["task"])
        cats = {}
        for col, e in d["categorical"].items():
            if e["mode"] == "one_hot":
                cats[col] = CategoricalEncoding("one_hot", vocabulary=tuple(e["vocabulary"]))
            else:
                cats[col] = CategoricalEncoding(
                    "target_mean",
                    sums=dict(e["sums"]),
                    counts={k: int(v) for k, v in e["counts"].items()},
                    prior=e["prior"],
                    smoothing=e["smoothing"],
                )
        return cls(schema, cats)


@dataclass(frozen=True, eq=False)
class EncodedMatrix:
    values: np.ndarray
    column_origin: tuple[str, ...]
    column_names: tuple[str, ...]

    @property
    def shape(self):
        return self.values.shape


def fit_encoder(dataset: Dataset, one_hot_max_cardinality: int = 16, smoothing: float = 1.0) -> Encoder:
    """Choose an encoding per categorical column from the rows of ``dataset``.

    Columns with at most ``one_hot_max_cardinality`` distinct values are
    one-hot encoded; the rest get a smoothed target mean
    ``(sum_c + s * prior) / (count_c + s)``.
    """
    if dataset.n == 0:
        raise DataError("cannot fit an encoder on an empty dataset")
    if smoothing < 0:
        raise ValidationError("smoothing must be non-negative")
    y = dataset.target
    prior = float(np.mean(y))
    cats = {}
    for col in dataset.schema.of_kind("categorical"):
        values = dataset.columns[col]
        vocab = tuple(sorted(set(values.tolist())))
        if len(vocab) <= one_hot_max_cardinality:
            cats[col] = CategoricalEncoding("one_hot", vocabulary=vocab)
            continue
        uniq, inverse = np.unique(values.astype(str), return_inverse=True)
        sums = np.bincount(inverse, weights=y, minlength=len(uniq))
        counts = np.bincount(inverse, minlength=len(uniq))
        cats[col] = CategoricalEncoding(
            "target_mean",
            sums={str(u): float(s) for u, s in zip(uniq, sums)},
            counts={str(u): int(c) for u, c in zip(uniq, counts)},
            prior=prior,
            smoothing=float(smoothing),
        )
    return Encoder(dataset.schema, cats)


def encode(dataset: Dataset, encoder: Encoder) -> EncodedMatrix:
    if dataset.schema != encoder.schema:
        raise DataError("dataset schema differs from the schema the encoder was fitted on")
    blocks = []
    for col in encoder.schema.features:
        values = dataset.columns[col]
        if encoder.schema.kind(col) == "numeric":
            blocks.append(values.reshape(-1, 1))
            continue
        enc = encoder.categorical[col]
        if enc.mode == "one_hot":
            lookup = {v: i for i, v in enumerate(enc.vocabulary)}
            block = np.zeros((dataset.n, len(enc.vocabulary)))
            idx = np.array([lookup.get(v, -1) for v in values], dtype=np.int64)
            seen = idx >= 0
            block[np.nonzero(seen)[0], idx[seen]] = 1.0
            blocks.append(block)
        else:
            blocks.append(np.array([enc.target_mean(v) for v in values], dtype=np.float64).reshape(-1, 1))
    values = np.hstack(blocks) if blocks else np.zeros((dataset.n, 0))
    names, origin = encoder.output_columns()
    return EncodedMatrix(np.ascontiguousarray(values, dtype=np.float64), tuple(origin), tuple(names))


def split_dataset(
    dataset: Dataset, fractions: Sequence[float] = (0.65, 0.15, 0.20), seed: int = 0
) -> tuple[Dataset, Dataset, Dataset]:
    """Seeded shuffle into train/valid/test.

    Valid and test sizes are ``floor(fraction * n)``; the remainder goes to
    train. Each part keeps the original row order.
    """
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or any(f <= 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise ValidationError(f"fractions must be three positive numbers summing to 1, got {fractions}")
    n = dataset.n
    if n < 3:
        raise DataError(f"need at least 3 rows to split, got {n}")
    perm = np.random.default_rng(seed).permutation(n)
    n_valid = math.floor(fractions[1] * n + 1e-9)
    n_test = math.floor(fractions[2] * n + 1e-9)
    n_train = n - n_valid - n_test
    parts = np.split(perm, [n_train, n_train + n_valid])
    return tuple(dataset.subset(np.sort(p)) for p in parts)
