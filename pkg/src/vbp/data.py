"""Dataset loading, numeric validation, in/out-sample split and linear scaling."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np


class DataError(ValueError):
    pass


@dataclass
class Dataset:
    columns: list[str]
    rows: list[list[str]]
    inputs: list[str] = field(default_factory=list)
    targets: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.targets:
            self.targets = self.columns[-1:]
        if not self.inputs:
            self.inputs = [c for c in self.columns if c not in self.targets]
        for c in self.inputs + self.targets:
            if c not in self.columns:
                raise DataError(f"unknown column {c!r}")

    @property
    def roles(self) -> list[str]:
        return self.inputs + self.targets

    def role_indices(self) -> list[int]:
        return [self.columns.index(c) for c in self.roles]

    def subset(self, rows) -> "Dataset":
        return Dataset(self.columns, list(rows), list(self.inputs), list(self.targets))

    def numeric(self) -> np.ndarray:
        """Inputs then targets as floats; every row must validate."""
        idx = self.role_indices()
        out = np.empty((len(self.rows), len(idx)))
        for i, row in enumerate(self.rows):
            for j, k in enumerate(idx):
                v = parse_number(row[k])
                if v is None:
                    raise DataError(f"row {i}: column {self.columns[k]!r} is not a number: {row[k]!r}")
                out[i, j] = v
        return out

    def __len__(self):
        return len(self.rows)


def parse_number(text: str) -> float | None:
    try:
        v = float(text.strip())
    except (ValueError, AttributeError):
        return None
    return v if math.isfinite(v) else None


def read_csv(source, inputs=None, targets=None) -> Dataset:
    """Read a headed CSV file (path or text stream)."""
    if isinstance(source, (str, Path)):
        with open(source, newline="", encoding="utf-8") as f:
            return read_csv(f, inputs, targets)
    reader = csv.reader(source)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise DataError("empty CSV") from None
    rows = []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise DataError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
        rows.append([c.strip() for c in row])
    return Dataset(header, rows, list(inputs or []), list(targets or []))


def bundled(name: str) -> Path:
    """Path of a data file shipped with the package."""
    return Path(str(resources.files("vbp") / "data" / name))


def validate(ds: Dataset) -> tuple[Dataset, Dataset]:
    """Split rows into (valid, rejected).

    A row is valid when the sum of the absolute values of its input and
    target cells is a number, i.e. every one of those cells is numeric.
    """
    idx = ds.role_indices()
    good, bad = [], []
    for row in ds.rows:
        total = 0.0
        ok = True
        for k in idx:
            v = parse_number(row[k])
            if v is None:
                ok = False
                break
            total += abs(v)
        (good if ok and math.isfinite(total) else bad).append(row)
    return ds.subset(good), ds.subset(bad)


def split(ds: Dataset, in_count: int, order: str = "file", seed: int = 0) -> tuple[Dataset, Dataset]:
    """First ``in_count`` rows (file order, or after a seeded shuffle) versus the rest."""
    if not 0 < in_count < len(ds):
        raise DataError(f"in-sample count {in_count} must be between 1 and {len(ds) - 1}")
    rows = list(ds.rows)
    if order == "shuffle":
        perm = np.random.default_rng(seed).permutation(len(rows))
        rows = [rows[i] for i in perm]
    elif order != "file":
        raise DataError(f"unknown split order {order!r}")
    return ds.subset(rows[:in_count]), ds.subset(rows[in_count:])


# -- scaling ------------------------------------------------------------------------------

@dataclass
class ScalerParams:
    """Per-column linear map y = alpha * x + beta."""
    columns: list[str]
    kind: str
    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=np.float64)
        self.beta = np.asarray(self.beta, dtype=np.float64)
        if np.any(self.alpha == 0):
            raise DataError("scale factor must be non-zero")

    def apply(self, x) -> np.ndarray:
        return self.alpha * np.asarray(x, dtype=np.float64) + self.beta

    def invert(self, y) -> np.ndarray:
        return (np.asarray(y, dtype=np.float64) - self.beta) / self.alpha

    def select(self, columns) -> "ScalerParams":
        idx = [self.columns.index(c) for c in columns]
        return ScalerParams(list(columns), self.kind, self.alpha[idx], self.beta[idx])


def fit_column(x, kind: str = "zscore", lo: float = -1.0, hi: float = 1.0,
               ddof: int = 0) -> tuple[float, float]:
    x = np.asarray(x, dtype=np.float64)
    if kind == "zscore":
        mu = float(np.mean(x))
        sigma = float(np.std(x, ddof=ddof))
        if sigma == 0.0:
            raise DataError("constant column cannot be z-scored")
        return 1.0 / sigma, -mu / sigma
    if kind == "range":
        A, B = float(np.min(x)), float(np.max(x))
        if A == B:
            raise DataError("constant column cannot be range-scaled")
        return (hi - lo) / (B - A), (B * lo - A * hi) / (B - A)
    if kind == "none":
        return 1.0, 0.0
    raise DataError(f"unknown scaler {kind!r}")


def fit_scaler(values, columns, kind: str = "zscore", lo: float = -1.0, hi: float = 1.0,
               ddof: int = 0) -> ScalerParams:
    """Fit one linear map per column of an in-sample matrix."""
    values = np.asarray(values, dtype=np.float64)
    pairs = []
    for j, c in enumerate(columns):
        try:
            pairs.append(fit_column(values[:, j], kind, lo, hi, ddof))
        except DataError as e:
            raise DataError(f"column {c!r}: {e}") from None
    alpha, beta = zip(*pairs) if pairs else ((), ())
    return ScalerParams(list(columns), kind, np.array(alpha), np.array(beta))


def write_scaler(params: ScalerParams, path):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["column", "kind", "alpha", "beta"])
    for c, a, b in zip(params.columns, params.alpha, params.beta):
        w.writerow([c, params.kind, repr(float(a)), repr(float(b))])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def read_scaler(path) -> ScalerParams:
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    if not rows:
        raise DataError(f"{path}: no scaler rows")
    kinds = {r["kind"] for r in rows}
    if len(kinds) != 1:
        raise DataError(f"{path}: mixed scaler kinds {sorted(kinds)}")
    return ScalerParams([r["column"] for r in rows], kinds.pop(),
                        [float(r["alpha"]) for r in rows], [float(r["beta"]) for r in rows])


def write_csv(path, columns, values):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in np.asarray(values, dtype=np.float64):
        w.writerow([repr(float(v)) for v in row])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


@dataclass
class Prepared:
    """Scaled in/out-sample matrices (inputs then targets) with their scaler."""
    train: np.ndarray
    test: np.ndarray
    scaler: ScalerParams
    inputs: list[str]
    targets: list[str]
    rejected: int = 0

    @property
    def n_inputs(self) -> int:
        return len(self.inputs)

    def target_alpha(self) -> np.ndarray:
        return self.scaler.alpha[len(self.inputs):]


def prepare(ds: Dataset, in_count: int | None = None, scaler: str = "zscore",
            order: str = "file", seed: int = 0, ddof: int = 0) -> Prepared:
    """Validate, split and scale; the scaler sees only in-sample rows."""
    valid, rejected = validate(ds)
    if in_count is None or in_count >= len(valid):
        train_raw, test_raw = valid.numeric(), np.empty((0, len(ds.roles)))
    else:
        a, b = split(valid, in_count, order, seed)
        train_raw, test_raw = a.numeric(), b.numeric()
    params = fit_scaler(train_raw, ds.roles, scaler, ddof=ddof)
    return Prepared(params.apply(train_raw), params.apply(test_raw) if len(test_raw) else test_raw,
                    params, list(ds.inputs), list(ds.targets), len(rejected))
