"""Shared numerics: linear-model training, federated averaging, metrics,
dataset validation, and contract-driven preprocessing.

Everything here is a pure function over its inputs (no I/O, no hidden state)
and deterministic, so a federated run is exactly reproducible: the server and
every agent import the same code and get bit-identical results for identical
inputs.
"""

from __future__ import annotations

import datetime as _dt
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import (
    DegenerateBounds,
    DimensionMismatch,
    EmptyInput,
    EmptyTestSet,
    NonFiniteWeights,
    SplitDegenerate,
    TooFewRows,
)

METRICS = ("MAE", "RMSE")
MODEL_KINDS = ("linear_regression",)


# ---------------------------------------------------------------------------
# model weights


@dataclass
class ModelWeights:
    """Linear model parameters: d feature weights followed by the bias."""

    values: np.ndarray  # length d+1, bias last
    model_kind: str = "linear_regression"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1 or self.values.size < 2:
            raise DimensionMismatch(f"weight vector must be 1-D with length >= 2, got shape {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise NonFiniteWeights("weight vector contains non-finite entries")

    @property
    def d(self) -> int:
        return self.values.size - 1

    @property
    def w(self) -> np.ndarray:
        return self.values[:-1]

    @property
    def bias(self) -> float:
        return float(self.values[-1])

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.d:
            raise DimensionMismatch(f"expected feature width {self.d}, got {X.shape}")
        return X @ self.w + self.bias

    def to_doc(self, trained_on_run: Optional[str] = None, round: Optional[int] = None) -> dict:
        return {
            "model_kind": self.model_kind,
            "d": self.d,
            "values": [float(v) for v in self.values],
            "trained_on_run": trained_on_run,
            "round": round,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "ModelWeights":
        model = cls(values=np.asarray(doc["values"], dtype=float), model_kind=doc["model_kind"])
        if model.d != doc["d"]:
            raise DimensionMismatch(f"document declares d={doc['d']} but carries {model.d}+1 values")
        return model

    @classmethod
    def zeros(cls, d: int, model_kind: str = "linear_regression") -> "ModelWeights":
        return cls(values=np.zeros(d + 1), model_kind=model_kind)


# ---------------------------------------------------------------------------
# schema and dataset


@dataclass
class DataSchema:
    """Agreed shape of every silo's dataset: the timestamp column first, then
    real-valued columns; a fixed sampling frequency; per-column value ranges."""

    columns: list[tuple[str, str]]  # (name, kind), kind in {"timestamp", "real"}
    frequency_minutes: float
    value_ranges: dict[str, tuple[float, float]] = field(default_factory=dict)
    max_missing_fraction: float = 0.0

    def __post_init__(self):
        kinds = [kind for _, kind in self.columns]
        if kinds.count("timestamp") != 1 or (self.columns and self.columns[0][1] != "timestamp"):
            raise ValueError("schema requires exactly one timestamp column, in first position")
        if self.frequency_minutes <= 0:
            raise ValueError("frequency must be positive")
        if not 0 <= self.max_missing_fraction < 1:
            raise ValueError("max_missing_fraction must be in [0,1)")

    @property
    def real_columns(self) -> list[str]:
        return [name for name, kind in self.columns if kind == "real"]

    def to_doc(self) -> dict:
        return {
            "columns": [[name, kind] for name, kind in self.columns],
            "frequency_minutes": self.frequency_minutes,
            "value_ranges": {k: [lo, hi] for k, (lo, hi) in self.value_ranges.items()},
            "max_missing_fraction": self.max_missing_fraction,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "DataSchema":
        return cls(
            columns=[(name, kind) for name, kind in doc["columns"]],
            frequency_minutes=doc["frequency_minutes"],
            value_ranges={k: (lo, hi) for k, (lo, hi) in doc.get("value_ranges", {}).items()},
            max_missing_fraction=doc.get("max_missing_fraction", 0.0),
        )


@dataclass
class Dataset:
    """A silo's time series as loaded from disk. ``values`` holds the real
    columns (one per non-timestamp column), NaN marking missing cells."""

    columns: list[tuple[str, str]]
    timestamps: list[_dt.datetime]
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise ValueError("values must be a 2-D array")

    @property
    def n_rows(self) -> int:
        return len(self.timestamps)


@dataclass
class ValidationReport:
    violations: list[dict] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations

    def add(self, rule: str, detail: str) -> None:
        self.violations.append({"rule": rule, "detail": detail})

    def to_doc(self) -> dict:
        return {"passed": self.passed, "violations": self.violations}

    @classmethod
    def from_doc(cls, doc: dict) -> "ValidationReport":
        return cls(violations=list(doc.get("violations", [])))


def validate_dataset(dataset: Dataset, schema: DataSchema) -> ValidationReport:
    """Check a dataset against the agreed schema. All violations are collected,
    not just the first: columns, frequency, ranges, missingness, monotonicity."""
    report = ValidationReport()

    if dataset.columns != schema.columns:
        report.add(
            "ColumnMismatch",
            f"expected columns {schema.columns}, got {dataset.columns}",
        )

    # Frequency: every consecutive delta must equal the agreed step.
    expected = schema.frequency_minutes
    deltas = [
        (b - a).total_seconds() / 60.0
        for a, b in zip(dataset.timestamps, dataset.timestamps[1:])
    ]
    bad = [d for d in deltas if abs(d - expected) > 1e-9]
    if bad:
        report.add(
            "FrequencyMismatch",
            f"expected {expected} min between rows, observed deltas include {sorted(set(bad))[:5]}",
        )

    # Ranges: match dataset value columns to declared ranges by name.
    value_names = [name for name, kind in dataset.columns if kind != "timestamp"]
    for idx, name in enumerate(value_names):
        if name not in schema.value_ranges or idx >= dataset.values.shape[1]:
            continue
        lo, hi = schema.value_ranges[name]
        col = dataset.values[:, idx]
        finite = col[np.isfinite(col)]
        out = finite[(finite < lo) | (finite > hi)]
        if out.size:
            report.add(
                "RangeViolation",
                f"column {name!r}: {out.size} value(s) outside [{lo}, {hi}], e.g. {float(out[0])}",
            )

    if dataset.values.size:
        missing = float(np.isnan(dataset.values).mean())
        if missing > schema.max_missing_fraction:
            report.add(
                "MissingnessExceeded",
                f"missing fraction {missing:.6f} exceeds allowed {schema.max_missing_fraction}",
            )

    non_monotone = [
        i + 1
        for i, (a, b) in enumerate(zip(dataset.timestamps, dataset.timestamps[1:]))
        if b <= a
    ]
    if non_monotone:
        report.add("NonMonotoneTime", f"timestamps not strictly increasing at rows {non_monotone[:5]}")

    return report


# ---------------------------------------------------------------------------
# preprocessing


def scale(x: np.ndarray, bounds: tuple[float, float]) -> np.ndarray:
    lo, hi = bounds
    if hi <= lo:
        raise DegenerateBounds(f"bounds ({lo}, {hi}) have max <= min")
    return (np.asarray(x, dtype=float) - lo) / (hi - lo)


def unscale(u: np.ndarray, bounds: tuple[float, float]) -> np.ndarray:
    lo, hi = bounds
    if hi <= lo:
        raise DegenerateBounds(f"bounds ({lo}, {hi}) have max <= min")
    return lo + np.asarray(u, dtype=float) * (hi - lo)


def preprocess(
    dataset: Dataset,
    schema: DataSchema,
    normalization_bounds: dict[str, tuple[float, float]],
    lag_window: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Min-max scale every real column with the contract bounds, then build
    lagged supervised pairs: row t gets the previous ``lag_window`` scaled
    target values (plus current exogenous columns) as features and the scaled
    target at t as label. Rows containing missing values are dropped after
    lagging.
    """
    real_names = schema.real_columns
    if not real_names:
        raise TooFewRows("schema declares no real columns")
    target, exog = real_names[0], real_names[1:]

    scaled = {}
    for idx, name in enumerate(real_names):
        if name not in normalization_bounds:
            raise DegenerateBounds(f"no normalization bounds for column {name!r}")
        scaled[name] = scale(dataset.values[:, idx], normalization_bounds[name])

    n = dataset.n_rows
    L = int(lag_window)
    if n < L + 2:
        raise TooFewRows(f"{n} rows cannot produce lag-{L} supervised pairs")

    t_series = scaled[target]
    feature_rows = []
    targets = []
    for t in range(L, n):
        feats = list(t_series[t - L : t]) + [scaled[name][t] for name in exog]
        feature_rows.append(feats)
        targets.append(t_series[t])
    X = np.asarray(feature_rows, dtype=float)
    y = np.asarray(targets, dtype=float)

    keep = np.isfinite(X).all(axis=1) & np.isfinite(y)
    X, y = X[keep], y[keep]
    if X.shape[0] < 2:
        raise TooFewRows(f"only {X.shape[0]} usable supervised pairs after dropping missing rows")
    return X, y


def split_train_test(
    X: np.ndarray, y: np.ndarray, ratio: float
) -> tuple[tuple[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]:
    """Chronological split: the first ceil(ratio*n) rows train, the rest test."""
    n = X.shape[0]
    if not 0 < ratio < 1:
        raise SplitDegenerate(f"ratio must be in (0,1), got {ratio}")
    if n < 2:
        raise SplitDegenerate(f"need at least 2 rows to split, got {n}")
    n_train = math.ceil(ratio * n)
    if n_train == 0 or n_train == n:
        raise SplitDegenerate(f"split {ratio} of {n} rows leaves one side empty")
    return (X[:n_train], y[:n_train]), (X[n_train:], y[n_train:])


# ---------------------------------------------------------------------------
# training


def mse_loss(weights: ModelWeights, X: np.ndarray, y: np.ndarray) -> float:
    residual = weights.predict(X) - np.asarray(y, dtype=float)
    return float(np.mean(residual**2))


def mse_gradient(weights: ModelWeights, X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Gradient of the mean-squared error w.r.t. [w..., b] (length d+1)."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = X.shape[0]
    residual = X @ weights.w + weights.bias - y
    grad_w = (2.0 / n) * (X.T @ residual)
    grad_b = (2.0 / n) * residual.sum()
    return np.append(grad_w, grad_b)


def train_local(
    X: np.ndarray,
    y: np.ndarray,
    initial: ModelWeights,
    learning_rate: float,
    local_epochs: int,
    seed: int = 0,
) -> ModelWeights:
    """Full-batch gradient descent on MSE. Deterministic: identical inputs
    yield bit-identical weights; ``seed`` is reserved for stochastic variants.
    """
    del seed
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise EmptyInput("training features must be a nonempty 2-D array")
    if X.shape[1] != initial.d:
        raise DimensionMismatch(f"X has width {X.shape[1]}, model expects {initial.d}")
    values = initial.values.copy()
    # divergence is detected explicitly, so overflow en route is expected
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(int(local_epochs)):
            grad = mse_gradient(ModelWeights(values, initial.model_kind), X, y)
            values = values - learning_rate * grad
            if not np.all(np.isfinite(values)):
                raise NonFiniteWeights(f"training diverged at epoch {epoch}")
    return ModelWeights(values=values, model_kind=initial.model_kind)


def aggregate(
    results: Sequence[tuple[ModelWeights, int]], mode: str = "Weighted"
) -> ModelWeights:
    """Federated averaging: elementwise mean of client weight vectors, either
    sample-count weighted (n_k / sum n) or uniform."""
    if not results:
        raise EmptyInput("aggregate requires at least one client result")
    d = results[0][0].d
    kind = results[0][0].model_kind
    for model, count in results:
        if model.d != d:
            raise DimensionMismatch(f"mixed dimensionalities {d} and {model.d}")
        if count < 1:
            raise EmptyInput(f"sample_count must be >= 1, got {count}")
    if mode == "Weighted":
        total = float(sum(count for _, count in results))
        stacked = sum((count / total) * model.values for model, count in results)
    elif mode == "Uniform":
        stacked = sum(model.values for model, _ in results) / len(results)
    else:
        raise ValueError(f"unknown aggregation mode {mode!r}")
    return ModelWeights(values=np.asarray(stacked, dtype=float), model_kind=kind)


def evaluate(
    weights: ModelWeights, X: np.ndarray, y: np.ndarray, metrics: Iterable[str]
) -> dict[str, float]:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise EmptyTestSet("evaluation requires a nonempty test set")
    residual = weights.predict(X) - y
    out = {}
    for metric in metrics:
        if metric == "MAE":
            out[metric] = float(np.mean(np.abs(residual)))
        elif metric == "RMSE":
            out[metric] = float(np.sqrt(np.mean(residual**2)))
        else:
            raise ValueError(f"unknown metric {metric!r}")
    return out
