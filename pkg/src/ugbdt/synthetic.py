"""Synthetic datasets: the 9x9 categorical "heart" regression task, the
three-arm spiral, and out-of-domain set construction from a foreign pool."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from .data import Dataset, Schema
from .errors import DataError, ValidationError
from .rng import stream

GRID = 9

# 17 cells with no training data: two lobes on rows 1-2, tapering to a point on row 7.
HEART_MASK = np.array(
    [
        [0, 0, 0, 0, 0, 0, 0, 0, 0],
        [0, 0, 1, 1, 0, 1, 1, 0, 0],
        [0, 1, 1, 1, 0, 1, 1, 1, 0],
        [0, 0, 0, 1, 1, 1, 0, 0, 0],
        [0, 0, 0, 0, 1, 0, 0, 0, 0],
        [0, 0, 0, 0, 1, 0, 0, 0, 0],
        [0, 0, 0, 0, 1, 0, 0, 0, 0],
        [0, 0, 0, 0, 1, 0, 0, 0, 0],
        [0, 0, 0, 0, 0, 0, 0, 0, 0],
    ],
    dtype=bool,
)


def default_noise_variance() -> np.ndarray:
    """``b(i, j) = 0.05 + 0.70 (i + j) / 16`` on the 9x9 grid."""
    i, j = np.meshgrid(np.arange(GRID), np.arange(GRID), indexing="ij")
    return 0.05 + 0.70 * (i + j) / 16


HEART_SCHEMA = Schema((("x1", "categorical"), ("x2", "categorical"), ("y", "target")), "regression")
HEART_GRID_SCHEMA = Schema(
    (("x1", "categorical"), ("x2", "categorical"), ("y", "target"), ("b", "ignored"), ("masked", "ignored")),
    "regression",
)


@dataclass(frozen=True, eq=False)
class HeartSpec:
    """Cell means ``a``, cell noise variances ``b`` and the untrained mask.

    ``a_values=None`` draws the means from U[0, 1] with the generation seed.
    """

    a_values: np.ndarray | None = None
    b_values: np.ndarray = field(default_factory=default_noise_variance)
    heart_mask: np.ndarray = field(default_factory=lambda: HEART_MASK.copy())
    per_cell: int = 1000
    grid_size: int = GRID

    def __post_init__(self):
        shape = (self.grid_size, self.grid_size)
        b = np.asarray(self.b_values, dtype=np.float64)
        mask = np.asarray(self.heart_mask, dtype=bool)
        if b.shape != shape or mask.shape != shape:
            raise ValidationError(f"b_values and heart_mask must be {shape}")
        if not np.all(b > 0):
            raise ValidationError("b_values must be strictly positive")
        if self.a_values is not None and np.shape(self.a_values) != shape:
            raise ValidationError(f"a_values must be {shape}")
        if self.per_cell < 0:
            raise ValidationError("per_cell must be >= 0")
        object.__setattr__(self, "b_values", b)
        object.__setattr__(self, "heart_mask", mask)

    def resolved(self, seed: int) -> "HeartSpec":
        """Copy with ``a_values`` filled in from ``seed``."""
        if self.a_values is not None:
            return self
        a = stream(seed, 0).uniform(0.0, 1.0, size=(self.grid_size, self.grid_size))
        return replace(self, a_values=a)


def generate_heart(spec: HeartSpec, seed: int) -> tuple[Dataset, Dataset]:
    """Training rows ``y ~ N(a(x1,x2), b(x1,x2))`` for every unmasked cell,
    plus an 81-row grid with the true ``a``, ``b`` and mask bit per cell."""
    spec = spec.resolved(seed)
    g = spec.grid_size
    a = np.asarray(spec.a_values, dtype=np.float64)
    cells = [(i, j) for i in range(g) for j in range(g) if not spec.heart_mask[i, j]]
    k = spec.per_cell
    x1 = np.repeat([i for i, _ in cells], k)
    x2 = np.repeat([j for _, j in cells], k)
    z = stream(seed, 1).standard_normal(len(cells) * k)
    y = a[x1, x2] + np.sqrt(spec.b_values[x1, x2]) * z
    train = Dataset(HEART_SCHEMA, {"x1": x1.astype(str), "x2": x2.astype(str), "y": y})

    gi, gj = np.meshgrid(np.arange(g), np.arange(g), indexing="ij")
    gi, gj = gi.ravel(), gj.ravel()
    grid = Dataset(
        HEART_GRID_SCHEMA,
        {
            "x1": gi.astype(str),
            "x2": gj.astype(str),
            "y": a[gi, gj],
            "b": np.array([repr(float(v)) for v in spec.b_values[gi, gj]]),
            "masked": spec.heart_mask[gi, gj].astype(int).astype(str),
        },
    )
    return train, grid


def heart_grid_features(grid: Dataset) -> Dataset:
    """The grid restricted to the training schema, for encoding."""
    return Dataset(HEART_SCHEMA, {c: grid[c] for c in HEART_SCHEMA.names})


@dataclass(frozen=True)
class SpiralSpec:
    classes: int = 3
    n_per_class: int = 2000
    noise_sd: float = 0.02
    rotation_turns: float = 1.75
    derived_features: bool = True

    def __post_init__(self):
        if self.classes != 3:
            raise ValidationError("the spiral has exactly 3 arms")
        if self.n_per_class < 1:
            raise ValidationError("n_per_class must be >= 1")
        if self.noise_sd < 0:
            raise ValidationError("noise_sd must be >= 0")


def spiral_schema(derived_features: bool) -> Schema:
    names = ["x1", "x2"] + (["u", "v", "r"] if derived_features else [])
    cols = tuple((n, "numeric") for n in names) + (("arm", "ignored"), ("label", "target"))
    return Schema(cols, "binary_classification")


def spiral_features(x: np.ndarray, y: np.ndarray) -> dict[str, np.ndarray]:
    """Raw coordinates plus coordinates in 45-degree rotated axes and the radius."""
    c = s = np.sqrt(0.5)
    return {"x1": x, "x2": y, "u": x * c + y * s, "v": -x * s + y * c, "r": np.hypot(x, y)}


def spiral_points(spec: SpiralSpec, seed: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Coordinates ``(x, y)`` and arm index of every point."""
    n = spec.n_per_class
    t = np.linspace(0.0, 1.0, n) if n > 1 else np.zeros(1)
    xs, ys, arms = [], [], []
    for k in range(spec.classes):
        phi = 2 * np.pi * spec.rotation_turns * t + 2 * np.pi * k / 3
        xs.append(t * np.cos(phi))
        ys.append(t * np.sin(phi))
        arms.append(np.full(n, k))
    x, y, arm = np.concatenate(xs), np.concatenate(ys), np.concatenate(arms)
    if spec.noise_sd > 0:
        jitter = stream(seed, 0).standard_normal((2, len(x))) * spec.noise_sd
        x, y = x + jitter[0], y + jitter[1]
    return x, y, arm


def generate_spiral(spec: SpiralSpec, seed: int, positive_class: int = 0) -> Dataset:
    """Three-arm spiral.

    The arm index (0, 1, 2) is kept in the ignored column ``arm``; the target
    ``label`` is 1 for arm ``positive_class`` and 0 otherwise, since the
    classification loss is binary.
    """
    if positive_class not in range(spec.classes):
        raise ValidationError(f"positive_class must be one of 0..{spec.classes - 1}")
    x, y, arm = spiral_points(spec, seed)
    feats = spiral_features(x, y)
    schema = spiral_schema(spec.derived_features)
    cols = {n: feats[n] for n, k in schema.columns if k == "numeric"}
    cols["arm"] = arm.astype(str)
    cols["label"] = (arm == positive_class).astype(np.float64)
    return Dataset(schema, cols)


def spiral_ring(
    n: int, r_min: float, r_max: float, seed: int, schema: Schema
) -> Dataset:
    """Points uniform in area over the annulus ``r_min <= r <= r_max``; target 0."""
    rng = stream(seed, 0)
    radius = np.sqrt(rng.uniform(r_min**2, r_max**2, size=n))
    angle = rng.uniform(0.0, 2 * np.pi, size=n)
    feats = spiral_features(radius * np.cos(angle), radius * np.sin(angle))
    cols = {name: feats[name] for name, kind in schema.columns if kind == "numeric"}
    cols[schema.target] = np.zeros(n)
    for col in schema.of_kind("ignored"):
        cols[col] = np.full(n, "", dtype=object)
    return Dataset(schema, cols)


@dataclass(frozen=True, eq=False)
class OodSpec:
    """Inputs for an out-of-domain set drawn from a foreign pool.

    Numeric in-domain columns take the pool's numeric columns in order.
    """

    source: Dataset
    schema: Schema
    in_domain_stats: Mapping[str, tuple[float, float]]
    in_domain_category_sets: Mapping[str, tuple[str, ...]]
    size: int
    seed: int = 0


def in_domain_statistics(train: Dataset) -> tuple[dict, dict]:
    """Per-numeric-column ``(mean, variance)`` and per-categorical value sets."""
    stats = {c: (float(np.mean(train[c])), float(np.var(train[c]))) for c in train.schema.of_kind("numeric")}
    cats = {c: tuple(sorted(set(train[c].tolist()))) for c in train.schema.of_kind("categorical")}
    return stats, cats


def build_ood_set(spec: OodSpec) -> Dataset:
    """Sample ``size`` pool rows without replacement and cast them into the
    in-domain schema.

    Numeric values become ``(v - mean) / sqrt(var)`` with the in-domain
    training statistics; categorical cells are uniform draws from the
    in-domain category sets.
    """
    src = spec.source
    schema = spec.schema
    if spec.size < 0 or src.n < spec.size:
        raise DataError(f"OOD pool has {src.n} rows, need {spec.size}")
    numeric = schema.of_kind("numeric")
    pool_numeric = src.schema.of_kind("numeric")
    if len(pool_numeric) < len(numeric):
        raise DataError(f"OOD pool has {len(pool_numeric)} numeric columns, need {len(numeric)}")
    for col in numeric:
        mean, var = spec.in_domain_stats[col]
        if not var > 0:
            raise DataError(f"in-domain variance of {col!r} is zero")
    rng = stream(spec.seed, 0)
    idx = np.sort(rng.choice(src.n, size=spec.size, replace=False))
    cols = {}
    for col, pool_col in zip(numeric, pool_numeric):
        mean, var = spec.in_domain_stats[col]
        cols[col] = (src[pool_col][idx] - mean) / np.sqrt(var)
    for col in schema.of_kind("categorical"):
        values = spec.in_domain_category_sets[col]
        if not values:
            raise DataError(f"empty in-domain category set for {col!r}")
        cols[col] = np.asarray(values, dtype=object)[rng.integers(0, len(values), size=spec.size)]
    # OOD rows have no meaningful label
    cols[schema.target] = np.zeros(spec.size)
    for col in schema.of_kind("ignored"):
        cols[col] = np.full(spec.size, "", dtype=object)
    return Dataset(schema, cols)
