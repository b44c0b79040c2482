"""The learning steps an agent performs locally.

Everything here is a pure function from (local data, instructions) to a result
document; no polling, no HTTP, no state. The instruction documents are either
a job (during a run) or a deployment recipe (at deployment time) -- both carry
the same preprocessing keys: ``schema``, ``normalization_bounds``,
``lag_window``, ``train_test_split``.
"""

from __future__ import annotations

import time

import numpy as np

from ..errors import DimensionMismatch
from ..learning import (
    DataSchema,
    Dataset,
    ModelWeights,
    ValidationReport,
    evaluate,
    preprocess,
    split_train_test,
    train_local,
    validate_dataset,
)

# The fixed yardstick for deployment gating and drift monitoring.
GATE_METRIC = "RMSE"

Arrays = tuple[np.ndarray, np.ndarray]


def _bounds_from(doc: dict) -> dict[str, tuple[float, float]]:
    return {name: (lo, hi) for name, (lo, hi) in doc["normalization_bounds"].items()}


def prepared_arrays(dataset: Dataset, doc: dict) -> Arrays:
    """Scale and lag a dataset per a job or recipe document."""
    schema = DataSchema.from_doc(doc["schema"])
    return preprocess(dataset, schema, _bounds_from(doc), doc["lag_window"])


def train_test_arrays(dataset: Dataset, doc: dict) -> tuple[Arrays, Arrays]:
    X, y = prepared_arrays(dataset, doc)
    return split_train_test(X, y, doc["train_test_split"])


def run_validation(dataset: Dataset, job_doc: dict) -> ValidationReport:
    schema = DataSchema.from_doc(job_doc["schema"])
    return validate_dataset(dataset, schema)


def run_training(dataset: Dataset, task: dict) -> dict:
    """Execute one ``train`` task: fit from the served global model on the
    local training split, score on the local test split, and package the
    result for upload. Only weights, counts and metrics leave the silo."""
    job = task["job"]
    hp = task["hyperparameters"]
    (X_train, y_train), (X_test, y_test) = train_test_arrays(dataset, job)
    started = time.perf_counter()
    trained = train_local(
        X_train,
        y_train,
        ModelWeights.from_doc(task["global_model"]),
        learning_rate=hp["learning_rate"],
        local_epochs=hp["local_epochs"],
    )
    elapsed_ms = (time.perf_counter() - started) * 1000.0
    return {
        "type": "round",
        "round": task["round"],
        "weight_vector": [float(v) for v in trained.values],
        "sample_count": int(X_train.shape[0]),
        "local_metrics": evaluate(trained, X_test, y_test, job["metrics"]),
        "wall_time_ms": elapsed_ms,
    }


def run_evaluation(dataset: Dataset, task: dict) -> dict:
    """Score the served global model on the local test split."""
    _, (X_test, y_test) = train_test_arrays(dataset, task["job"])
    weights = ModelWeights.from_doc(task["global_model"])
    return {
        "type": "evaluation",
        "metrics": evaluate(weights, X_test, y_test, task["metrics"]),
        "sample_count": int(X_test.shape[0]),
    }


def personalize(
    initial: ModelWeights,
    X: np.ndarray,
    y: np.ndarray,
    learning_rate: float,
    epochs: int,
) -> ModelWeights:
    """Continue training the global model on local data. Zero epochs is the
    identity -- the caller gets the global model back unchanged."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or initial.d != X.shape[1]:
        raise DimensionMismatch(
            f"model expects {initial.d} features, local data provides "
            f"{X.shape[1] if X.ndim == 2 else '?'}"
        )
    if epochs == 0:
        return initial
    return train_local(X, y, initial, learning_rate=learning_rate, local_epochs=epochs)


def gate_metric(weights: ModelWeights, X: np.ndarray, y: np.ndarray) -> float:
    """The deployment-gate score of a candidate model on held-out data."""
    return evaluate(weights, X, y, [GATE_METRIC])[GATE_METRIC]


def should_deploy(metric: float, threshold: float) -> bool:
    """Accept when the gate metric is at or below the threshold: a model that
    exactly meets the bar goes live."""
    return metric <= threshold
