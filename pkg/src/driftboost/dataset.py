"""Feature/target tables for the R/C seismic damage regression problem.

The canonical schema has 18 columns: 4 structural descriptors of the
building (total height, wall base-shear ratios along both horizontal axes,
structural eccentricity) and 14 ground-motion intensity measures, with the
maximum interstory drift ratio (MIDR) as the target. Real tables come from
structural analysis pipelines; :func:`synth_generate` produces a documented
synthetic stand-in with a known ground-truth function for testing.

CSV convention: UTF-8, comma separated, first row is the header, '.' decimal
point, no thousands separators. ``write_csv`` emits shortest round-trip float
representations, so ``load_csv(write_csv(ds))`` reproduces every cell bit
for bit.
"""

from __future__ import annotations

import csv
import importlib.resources
import json
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .rng import make_rng


class SchemaError(ValueError):
    """Header/shape of a table does not match the expected schema."""


class CellError(ValueError):
    """A cell failed to parse as a finite real number."""

    def __init__(self, row: int, column: str, raw: str):
        self.row = row
        self.column = column
        self.raw = raw
        super().__init__(f"row {row}, column {column}: cannot parse {raw!r} as a finite number")


@dataclass(frozen=True)
class FeatureSpec:
    """One input column: display name, unit, optional physical range."""

    name: str
    unit: str = ""
    physical_range: tuple[float, float] | None = None

    def __post_init__(self):
        if self.physical_range is not None:
            lo, hi = self.physical_range
            if not lo <= hi:
                raise ValueError(f"{self.name}: range lower bound {lo} exceeds upper bound {hi}")


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered feature list plus the target column name.

    ``target_min`` is an optional lower bound on the target (0.0 for MIDR,
    which is a non-negative drift ratio).
    """

    features: tuple[FeatureSpec, ...]
    target: str = "MIDR"
    target_min: float | None = None

    def __post_init__(self):
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise SchemaError(f"duplicate feature names: {dupes}")
        if self.target in names:
            raise SchemaError(f"target {self.target!r} collides with a feature name")

    @property
    def feature_names(self) -> list[str]:
        return [f.name for f in self.features]

    @property
    def num_features(self) -> int:
        return len(self.features)

    def index_of(self, name: str) -> int:
        return self.feature_names.index(name)


@lru_cache(maxsize=1)
def canonical_schema() -> FeatureSchema:
    """The shipped 18-feature seismic damage schema (loaded from data/)."""
    raw = importlib.resources.files("driftboost.data").joinpath("canonical_schema.json").read_text()
    spec = json.loads(raw)
    feats = tuple(
        FeatureSpec(f["name"], f.get("unit", ""), tuple(f["range"]) if f.get("range") else None)
        for f in spec["features"]
    )
    return FeatureSchema(features=feats, target=spec["target"]["name"], target_min=spec["target"].get("min"))


@dataclass
class Dataset:
    """Immutable row-major feature matrix plus target vector.

    Arrays are marked read-only at construction; a Dataset can be shared
    across threads freely.
    """

    schema: FeatureSchema
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.X = np.ascontiguousarray(self.X, dtype=np.float64)
        self.y = np.ascontiguousarray(self.y, dtype=np.float64)
        if self.X.ndim != 2:
            raise ValueError(f"X must be 2-D, got shape {self.X.shape}")
        n, d = self.X.shape
        if n < 1:
            raise ValueError("dataset must contain at least one row")
        if d != self.schema.num_features:
            raise SchemaError(f"X has {d} columns, schema declares {self.schema.num_features}")
        if self.y.shape != (n,):
            raise ValueError(f"target length {self.y.shape} does not match {n} rows")
        if not np.isfinite(self.X).all():
            i, j = np.argwhere(~np.isfinite(self.X))[0]
            raise CellError(int(i) + 1, self.schema.feature_names[j], str(self.X[i, j]))
        if not np.isfinite(self.y).all():
            i = int(np.argwhere(~np.isfinite(self.y))[0][0])
            raise CellError(i + 1, self.schema.target, str(self.y[i]))
        self.X.flags.writeable = False
        self.y.flags.writeable = False

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def take(self, rows: np.ndarray) -> "Dataset":
        """New Dataset holding the given row indices (copying)."""
        return Dataset(self.schema, self.X[rows].copy(), self.y[rows].copy())


@dataclass(frozen=True)
class SplitSpec:
    """Holdout split: test fraction in (0, 1) and a seed."""

    test_fraction: float
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.test_fraction < 1.0:
            raise ValueError(f"test_fraction must lie in (0, 1), got {self.test_fraction}")


@dataclass(frozen=True)
class RangeWarning:
    """One cell outside its declared physical range (advisory only)."""

    row: int
    column: str
    value: float
    low: float
    high: float

    def __str__(self):
        return (
            f"row {self.row}, column {self.column}: value {self.value!r} "
            f"outside physical range [{self.low!r}, {self.high!r}]"
        )


@dataclass
class ColumnStats:
    name: str
    mean: float
    sd: float
    min: float
    max: float


def _parse_cell(raw: str, row: int, column: str) -> float:
    try:
        v = float(raw)
    except ValueError:
        raise CellError(row, column, raw) from None
    if not np.isfinite(v):
        raise CellError(row, column, raw)
    return v


def load_csv(path: str | Path, schema: FeatureSchema) -> Dataset:
    """Read a CSV table whose header matches ``schema`` (any column order).

    Columns are reordered to schema order. Missing, extra, or duplicated
    header names raise SchemaError; an unparseable or non-finite cell raises
    CellError naming the 1-based data row and the column.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: file is empty") from None
        expected = set(schema.feature_names) | {schema.target}
        seen = set()
        for name in header:
            if name in seen:
                raise SchemaError(f"{path}: duplicate column {name!r}")
            seen.add(name)
        missing = sorted(expected - seen)
        extra = sorted(seen - expected)
        if missing or extra:
            parts = []
            if missing:
                parts.append(f"missing columns {missing}")
            if extra:
                parts.append(f"unexpected columns {extra}")
            raise SchemaError(f"{path}: " + "; ".join(parts))

        col_of = {name: k for k, name in enumerate(header)}
        feat_pos = [col_of[name] for name in schema.feature_names]
        target_pos = col_of[schema.target]

        rows: list[list[float]] = []
        targets: list[float] = []
        for i, record in enumerate(reader, start=1):
            if len(record) != len(header):
                raise SchemaError(f"{path}: row {i} has {len(record)} cells, header has {len(header)}")
            rows.append([_parse_cell(record[p], i, header[p]) for p in feat_pos])
            targets.append(_parse_cell(record[target_pos], i, schema.target))

    if not rows:
        raise SchemaError(f"{path}: no data rows")
    return Dataset(schema, np.array(rows, dtype=np.float64), np.array(targets, dtype=np.float64))


def write_csv(ds: Dataset, path: str | Path) -> None:
    """Write the canonical CSV form (header, shortest round-trip floats)."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(ds.schema.feature_names + [ds.schema.target])
        for i in range(ds.n):
            writer.writerow([repr(float(v)) for v in ds.X[i]] + [repr(float(ds.y[i]))])


def validate_ranges(ds: Dataset) -> list[RangeWarning]:
    """Flag every cell outside its declared physical range.

    Advisory: returns warnings (1-based rows) and never mutates or rejects
    the data. Features without a declared range are skipped; the target is
    checked against the schema's lower bound when one is declared.
    """
    warnings: list[RangeWarning] = []
    for j, spec in enumerate(ds.schema.features):
        if spec.physical_range is None:
            continue
        lo, hi = spec.physical_range
        col = ds.X[:, j]
        for i in np.nonzero((col < lo) | (col > hi))[0]:
            warnings.append(RangeWarning(int(i) + 1, spec.name, float(col[i]), lo, hi))
    if ds.schema.target_min is not None:
        for i in np.nonzero(ds.y < ds.schema.target_min)[0]:
            warnings.append(
                RangeWarning(int(i) + 1, ds.schema.target, float(ds.y[i]), ds.schema.target_min, np.inf)
            )
    warnings.sort(key=lambda w: (w.row, w.column))
    return warnings


# Synthetic target: a fixed, documented stand-in for the (unpublished)
# analysis outputs. See ``planted_midr`` for the exact formula.

_SYNTH_FLOOR = 1e-3


def _unit(ds_X: np.ndarray, schema: FeatureSchema, name: str) -> np.ndarray:
    j = schema.index_of(name)
    lo, hi = schema.features[j].physical_range
    return (ds_X[:, j] - lo) / (hi - lo)


def planted_midr(X: np.ndarray, schema: FeatureSchema | None = None) -> np.ndarray:
    """Ground-truth drift function used by the synthetic generator.

    With u(f) the feature rescaled to [0, 1] over its physical range:

        midr = 0.9
             + 1.3 * u(PGA)^1.5
             + 0.8 * u(HI)
             + 2.4 * u(PGA) * u(H_tot)
             - 0.6 * (n_vx + n_vy) / 157

    Monotone increasing in PGA and HI, decreasing in both wall ratios; the
    interaction term encodes that tall buildings under strong shaking drift
    disproportionately. Minimum value 0.3, maximum 5.4. The formula is
    frozen: tests freeze expectations against it.
    """
    schema = schema or canonical_schema()
    u_pga = _unit(X, schema, "PGA")
    u_hi = _unit(X, schema, "HI")
    u_h = _unit(X, schema, "H_tot")
    nvx = X[:, schema.index_of("n_vx")]
    nvy = X[:, schema.index_of("n_vy")]
    return 0.9 + 1.3 * u_pga**1.5 + 0.8 * u_hi + 2.4 * u_pga * u_h - 0.6 * (nvx + nvy) / 157.0


def synth_generate(n: int, seed: int, noise_sd: float = 0.0) -> Dataset:
    """Sample ``n`` rows of the canonical schema with a planted target.

    Features are drawn independently and uniformly within their physical
    ranges; the target is ``planted_midr`` plus centered Gaussian noise of
    standard deviation ``noise_sd``, floored at 1e-3 so the target stays
    strictly positive (MIDR is a positive ratio and percentage-error metrics
    need nonzero actuals). With ``noise_sd=0`` the floor is never active and
    the target equals the planted function exactly. Output is a pure
    function of (n, seed, noise_sd).
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if noise_sd < 0:
        raise ValueError(f"noise_sd must be >= 0, got {noise_sd}")
    schema = canonical_schema()
    rng = make_rng(seed)
    lows = np.array([f.physical_range[0] for f in schema.features])
    highs = np.array([f.physical_range[1] for f in schema.features])
    X = rng.uniform(lows, highs, size=(n, schema.num_features))
    y = planted_midr(X, schema)
    if noise_sd > 0:
        y = y + rng.normal(0.0, noise_sd, size=n)
    y = np.maximum(y, _SYNTH_FLOOR)
    return Dataset(schema, X, y)


def train_test_split(ds: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    """Disjoint (train, test) partition of the rows.

    Test size is round(n * test_fraction) clamped to [1, n-1] (banker's
    rounding, as built-in round). Row order within each part follows the
    original table. Deterministic per seed.
    """
    if ds.n < 2:
        raise ValueError("need at least 2 rows to split")
    n_test = min(max(round(ds.n * spec.test_fraction), 1), ds.n - 1)
    perm = make_rng(spec.seed).permutation(ds.n)
    test_rows = np.sort(perm[:n_test])
    train_rows = np.sort(perm[n_test:])
    return ds.take(train_rows), ds.take(test_rows)


def feature_stats(ds: Dataset) -> list[ColumnStats]:
    """Per-feature mean, population standard deviation (divide by n), min, max."""
    out = []
    for j, spec in enumerate(ds.schema.features):
        col = ds.X[:, j]
        out.append(
            ColumnStats(spec.name, float(col.mean()), float(col.std()), float(col.min()), float(col.max()))
        )
    return out
