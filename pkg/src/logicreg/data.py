"""CSV loading, preprocessing and splitting for tabular regression.

Pipeline order is fixed: drop rows with any missing cell, one-hot encode
categoricals (category order = first appearance in the training rows),
min-max scale continuous columns with training min/max (test values are
clipped into [0, 1]), standardize the target with training mean and
population std. All transform statistics are fitted on training rows only
and stored in the schema so that stored models are self-contained from raw
feature values.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, DataError

CONTINUOUS = "continuous"
CATEGORICAL = "categorical"
TARGET = "target"
_KINDS = (CONTINUOUS, CATEGORICAL, TARGET)


@dataclass
class ColumnSchema:
    """Fitted transform statistics for one source column."""

    name: str
    kind: str
    vmin: Optional[float] = None      # continuous
    vmax: Optional[float] = None      # continuous
    categories: Optional[list] = None  # categorical, first-seen order
    mean: Optional[float] = None      # target
    std: Optional[float] = None       # target, population (ddof=0)

    def to_json(self) -> dict:
        out = {"name": self.name, "kind": self.kind}
        if self.kind == CONTINUOUS:
            out["vmin"] = self.vmin
            out["vmax"] = self.vmax
        elif self.kind == CATEGORICAL:
            out["categories"] = list(self.categories)
        elif self.kind == TARGET:
            out["mean"] = self.mean
            out["std"] = self.std
        return out

    @staticmethod
    def from_json(d: dict) -> "ColumnSchema":
        return ColumnSchema(
            name=d["name"],
            kind=d["kind"],
            vmin=d.get("vmin"),
            vmax=d.get("vmax"),
            categories=list(d["categories"]) if "categories" in d else None,
            mean=d.get("mean"),
            std=d.get("std"),
        )


@dataclass
class RawTable:
    """Parsed but untransformed rows, column-major.

    Continuous and target columns are float arrays with NaN for missing
    cells; categorical columns are lists of strings with None for missing.
    """

    names: list
    kinds: list
    columns: list
    n_rows: int

    @staticmethod
    def from_columns(names: Sequence[str], kinds: Sequence[str], columns: Sequence) -> "RawTable":
        names = list(names)
        kinds = list(kinds)
        if len(names) != len(kinds) or len(names) != len(columns):
            raise DataError("names, kinds and columns must align")
        n = None
        cols = []
        for kind, col in zip(kinds, columns):
            if kind not in _KINDS:
                raise DataError(f"unknown column kind {kind!r}")
            if kind == CATEGORICAL:
                col = [None if v is None else str(v) for v in col]
            else:
                col = np.asarray(col, dtype=np.float64)
            if n is None:
                n = len(col)
            elif len(col) != n:
                raise DataError("column lengths differ")
            cols.append(col)
        if kinds.count(TARGET) > 1:
            raise DataError("multiple target columns")
        return RawTable(names=names, kinds=kinds, columns=cols, n_rows=int(n or 0))

    def missing_mask(self) -> np.ndarray:
        """Boolean mask of rows containing at least one missing cell."""
        miss = np.zeros(self.n_rows, dtype=bool)
        for kind, col in zip(self.kinds, self.columns):
            if kind == CATEGORICAL:
                miss |= np.array([v is None for v in col], dtype=bool)
            else:
                miss |= np.isnan(col)
        return miss

    def take(self, idx: np.ndarray) -> "RawTable":
        cols = []
        for kind, col in zip(self.kinds, self.columns):
            if kind == CATEGORICAL:
                cols.append([col[i] for i in idx])
            else:
                cols.append(col[idx])
        return RawTable(self.names, self.kinds, cols, len(idx))


@dataclass
class Dataset:
    """Model-ready matrix form of a table.

    features are float64 in [0, 1]; target is standardized. feature_origin
    maps each encoded column back to (source name, kind, category-or-None).
    """

    features: np.ndarray
    target: np.ndarray
    schema: list
    feature_names: list
    feature_origin: list

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def _target_schema(self) -> ColumnSchema:
        for c in self.schema:
            if c.kind == TARGET:
                return c
        raise DataError("schema has no target column")

    @property
    def target_mean(self) -> float:
        return float(self._target_schema().mean)

    @property
    def target_std(self) -> float:
        return float(self._target_schema().std)

    def original_target(self) -> np.ndarray:
        return self.target * self.target_std + self.target_mean

    def subset(self, idx: np.ndarray) -> "Dataset":
        return Dataset(
            features=self.features[idx],
            target=self.target[idx],
            schema=self.schema,
            feature_names=self.feature_names,
            feature_origin=self.feature_origin,
        )


@dataclass
class FoldPlan:
    """Cross-validation fold assignment over dataset rows."""

    n_folds: int
    assignment: np.ndarray

    def split_indices(self, fold: int):
        if not 0 <= fold < self.n_folds:
            raise ConfigError(f"fold {fold} out of range")
        val = np.flatnonzero(self.assignment == fold)
        train = np.flatnonzero(self.assignment != fold)
        return train, val


def load_csv(path: str, schema_hint: Optional[dict] = None) -> RawTable:
    """Parse a CSV file into a RawTable.

    schema_hint maps column name to kind for columns whose role is known
    (the target column, declared categoricals). Remaining columns are
    continuous when every non-missing cell parses as a float, categorical
    otherwise. Empty cells are missing.
    """
    hint = dict(schema_hint or {})
    for name, kind in hint.items():
        if kind not in _KINDS:
            raise ConfigError(f"unknown kind {kind!r} for column {name!r}")
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file, no header") from None
        header = [h.strip() for h in header]
        if len(set(header)) != len(header):
            raise DataError(f"{path}: duplicate column names in header")
        for name in hint:
            if name not in header:
                raise DataError(f"{path}: column {name!r} not in header")
        rows = []
        for i, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataError(
                    f"{path}: line {i} has {len(row)} cells, header has {len(header)}"
                )
            rows.append([c.strip() for c in row])

    n = len(rows)
    kinds = []
    columns = []
    for j, name in enumerate(header):
        cells = [r[j] for r in rows]
        kind = hint.get(name)
        if kind is None:
            kind = CONTINUOUS if _all_numeric(cells) else CATEGORICAL
        if kind == CATEGORICAL:
            columns.append([c if c != "" else None for c in cells])
        else:
            vals = np.empty(n, dtype=np.float64)
            for i, c in enumerate(cells):
                if c == "":
                    vals[i] = np.nan
                else:
                    try:
                        vals[i] = float(c)
                    except ValueError:
                        if kind == TARGET:
                            raise DataError(
                                f"{path}: non-numeric target value {c!r} on line {i + 2}"
                            ) from None
                        raise DataError(
                            f"{path}: non-numeric value {c!r} in continuous column "
                            f"{name!r} on line {i + 2}"
                        ) from None
            columns.append(vals)
        kinds.append(kind)
    return RawTable(names=header, kinds=kinds, columns=columns, n_rows=n)


def _all_numeric(cells) -> bool:
    seen_any = False
    for c in cells:
        if c == "":
            continue
        seen_any = True
        try:
            float(c)
        except ValueError:
            return False
    return seen_any


def fit_schema(raw: RawTable, train_mask: np.ndarray) -> list:
    """Fit transform statistics on the masked (training) rows."""
    if raw.kinds.count(TARGET) != 1:
        raise DataError("table must declare exactly one target column")
    train_mask = np.asarray(train_mask, dtype=bool)
    if train_mask.shape != (raw.n_rows,):
        raise DataError("train mask length does not match row count")
    if int(train_mask.sum()) < 2:
        raise DataError("need at least 2 training rows to fit transforms")
    schema = []
    for name, kind, col in zip(raw.names, raw.kinds, raw.columns):
        if kind == CONTINUOUS:
            vals = col[train_mask]
            vmin = float(np.min(vals))
            vmax = float(np.max(vals))
            schema.append(ColumnSchema(name=name, kind=kind, vmin=vmin, vmax=vmax))
        elif kind == CATEGORICAL:
            cats = []
            seen = set()
            for i in np.flatnonzero(train_mask):
                v = col[i]
                if v not in seen:
                    seen.add(v)
                    cats.append(v)
            schema.append(ColumnSchema(name=name, kind=kind, categories=cats))
        else:
            vals = col[train_mask]
            mean = float(np.mean(vals))
            std = float(np.std(vals))
            if std == 0.0:
                raise DataError(f"target column {name!r} is constant on training rows")
            schema.append(ColumnSchema(name=name, kind=kind, mean=mean, std=std))
    return schema


def encoded_feature_layout(schema: list):
    """(feature_names, feature_origin) for the encoded feature matrix."""
    names = []
    origin = []
    for c in schema:
        if c.kind == CONTINUOUS:
            names.append(c.name)
            origin.append((c.name, CONTINUOUS, None))
        elif c.kind == CATEGORICAL:
            for cat in c.categories:
                names.append(f"{c.name}={cat}")
                origin.append((c.name, CATEGORICAL, cat))
    return names, origin


def apply_schema(raw: RawTable, schema: list, require_target: bool = True,
                 allow_missing: bool = False):
    """Transform raw rows with fitted statistics.

    Returns (features, target-or-None). Unknown categories encode to the
    all-zero vector. Missing cells raise unless allow_missing is set (the
    training path drops such rows before calling this).
    """
    by_name = {c.name: c for c in schema}
    for c in schema:
        if c.kind != TARGET and c.name not in raw.names:
            raise DataError(f"input is missing column {c.name!r}")
    if not allow_missing:
        for name, kind, col in zip(raw.names, raw.kinds, raw.columns):
            sc = by_name.get(name)
            if sc is None or sc.kind == TARGET:
                continue
            if kind == CATEGORICAL:
                if any(v is None for v in col):
                    raise DataError(f"missing values in column {name!r}")
            elif np.isnan(col).any():
                raise DataError(f"missing values in column {name!r}")

    blocks = []
    target = None
    raw_by_name = {n: (k, c) for n, k, c in zip(raw.names, raw.kinds, raw.columns)}
    for c in schema:
        if c.kind == CONTINUOUS:
            kind, col = raw_by_name[c.name]
            if kind == CATEGORICAL:
                raise DataError(f"column {c.name!r} is not numeric")
            span = c.vmax - c.vmin
            if span == 0.0:
                block = np.zeros((raw.n_rows, 1), dtype=np.float64)
            else:
                block = np.clip((col - c.vmin) / span, 0.0, 1.0)[:, None]
            blocks.append(block)
        elif c.kind == CATEGORICAL:
            kind, col = raw_by_name[c.name]
            block = np.zeros((raw.n_rows, len(c.categories)), dtype=np.float64)
            index = {cat: j for j, cat in enumerate(c.categories)}
            for i, v in enumerate(col):
                j = index.get(v)
                if j is not None:
                    block[i, j] = 1.0
            blocks.append(block)
        else:
            got = raw_by_name.get(c.name)
            if got is None:
                if require_target:
                    raise DataError(f"input is missing target column {c.name!r}")
                continue
            _, col = got
            target = (col - c.mean) / c.std
    features = (
        np.concatenate(blocks, axis=1)
        if blocks
        else np.zeros((raw.n_rows, 0), dtype=np.float64)
    )
    return features, target


def preprocess(raw: RawTable, train_mask: np.ndarray) -> Dataset:
    """Drop missing rows, fit transforms on training survivors, apply to all.

    Returns a Dataset over every surviving row, ordered as in the input.
    """
    train_mask = np.asarray(train_mask, dtype=bool)
    if train_mask.shape != (raw.n_rows,):
        raise DataError("train mask length does not match row count")
    keep = ~raw.missing_mask()
    if not keep.any():
        raise DataError("no rows left after dropping missing values")
    survivors = np.flatnonzero(keep)
    clean = raw.take(survivors)
    schema = fit_schema(clean, train_mask[survivors])
    features, target = apply_schema(clean, schema)
    names, origin = encoded_feature_layout(schema)
    return Dataset(
        features=features,
        target=target,
        schema=schema,
        feature_names=names,
        feature_origin=origin,
    )


def split(raw: RawTable, test_fraction: float, seed: int):
    """Random train/test split of the surviving rows.

    Transforms are fitted on the training part only; both parts share the
    fitted schema. Row order inside each part follows the original file.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ConfigError(f"test_fraction must be in (0, 1), got {test_fraction}")
    keep = ~raw.missing_mask()
    survivors = np.flatnonzero(keep)
    n = len(survivors)
    if n < 2:
        raise DataError("need at least 2 complete rows to split")
    n_test = int(round(n * test_fraction))
    if n_test == 0 or n_test == n:
        raise DataError(
            f"test fraction {test_fraction} leaves an empty side for {n} rows"
        )
    perm = np.random.default_rng(seed).permutation(n)
    test_pos = np.sort(perm[:n_test])
    train_pos = np.sort(perm[n_test:])
    clean = raw.take(survivors)
    train_raw = clean.take(train_pos)
    test_raw = clean.take(test_pos)
    schema = fit_schema(train_raw, np.ones(train_raw.n_rows, dtype=bool))
    names, origin = encoded_feature_layout(schema)
    tr_x, tr_y = apply_schema(train_raw, schema)
    te_x, te_y = apply_schema(test_raw, schema)
    train_ds = Dataset(tr_x, tr_y, schema, names, origin)
    test_ds = Dataset(te_x, te_y, schema, names, origin)
    return train_ds, test_ds


def default_fold_count(n_train: int) -> int:
    """Smaller datasets get more folds: <1000 rows 4, up to 5000 rows 3, else 2."""
    if n_train < 1000:
        return 4
    if n_train <= 5000:
        return 3
    return 2


def make_folds(dataset: Dataset, n_folds: int, seed: int) -> FoldPlan:
    """Random balanced fold assignment; fold sizes differ by at most one."""
    n = dataset.n_rows
    if n_folds < 2:
        raise ConfigError(f"need at least 2 folds, got {n_folds}")
    if n_folds > n:
        raise DataError(f"{n_folds} folds for {n} rows")
    perm = np.random.default_rng(seed).permutation(n)
    assignment = np.empty(n, dtype=np.int64)
    assignment[perm] = np.arange(n) % n_folds
    return FoldPlan(n_folds=n_folds, assignment=assignment)
