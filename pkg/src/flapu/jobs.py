"""Job compilation: a sealed contract — or a server admin's direct parameter
set for test runs — becomes a complete, validated run configuration.

The job document is the single machine-readable artifact clients fetch; its
canonical JSON form is exactly what goes over the wire.
"""

from __future__ import annotations

import uuid
from dataclasses import dataclass, field
from typing import Optional

from .errors import ContractIncomplete, NotAuthorized, NotFound, ValueOutOfRange
from .governance import TOPIC_KEYS, GovernanceContract
from .learning import DataSchema
from .provenance import Ledger, utcnow
from .registry import ROLE_SERVER_ADMIN, UserAccount

MODEL_KINDS = ("linear_regression",)
METRIC_NAMES = ("MAE", "RMSE")
MAX_GRID_ENTRIES = 8

ORIGIN_CONTRACT = "Contract"
ORIGIN_ADMIN = "AdminManual"

# job fields named after the negotiation topics they came from, where they differ
_FIELD_TOPIC = {
    "metrics": "evaluation_metrics",
    "schema": "data_schema",
}


def _out_of_range(field_name: str, why: str):
    topic = _FIELD_TOPIC.get(field_name, field_name)
    raise ValueOutOfRange(f"{topic}: {why}", field=topic)


def _require_int(field_name: str, value, minimum: int) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        _out_of_range(field_name, f"expected an integer, got {value!r}")
    if value < minimum:
        _out_of_range(field_name, f"must be >= {minimum}, got {value}")
    return value


@dataclass
class FLJob:
    """Everything a client needs to take part in one federated run."""

    job_id: str
    origin: str  # Contract | AdminManual
    contract_id: Optional[str]
    rounds: int
    min_clients: int
    train_test_split: float
    local_epochs: int
    learning_rate: float
    model_kind: str
    lag_window: int
    schema: DataSchema
    metrics: list[str]
    normalization_bounds: dict[str, tuple[float, float]]
    deploy_threshold_default: float
    hyperparameter_grid: Optional[list[dict]] = None
    aggregation: str = "Weighted"  # Weighted (sample counts) | Uniform
    created_at: str = field(default_factory=utcnow)

    def __post_init__(self):
        if self.origin not in (ORIGIN_CONTRACT, ORIGIN_ADMIN):
            _out_of_range("origin", f"unknown origin {self.origin!r}")
        _require_int("rounds", self.rounds, 1)
        _require_int("min_clients", self.min_clients, 2 if self.origin == ORIGIN_CONTRACT else 1)
        _require_int("local_epochs", self.local_epochs, 1)
        _require_int("lag_window", self.lag_window, 1)
        if not isinstance(self.train_test_split, float) or not 0.0 < self.train_test_split < 1.0:
            _out_of_range("train_test_split", f"must lie strictly inside (0,1), got {self.train_test_split!r}")
        if not isinstance(self.learning_rate, (int, float)) or isinstance(self.learning_rate, bool) \
                or not self.learning_rate > 0:
            _out_of_range("learning_rate", f"must be positive, got {self.learning_rate!r}")
        if self.model_kind not in MODEL_KINDS:
            _out_of_range("model_kind", f"unsupported kind {self.model_kind!r}")
        if self.aggregation not in ("Weighted", "Uniform"):
            _out_of_range("aggregation", f"must be Weighted or Uniform, got {self.aggregation!r}")
        if not self.metrics or len(set(self.metrics)) != len(self.metrics) \
                or any(m not in METRIC_NAMES for m in self.metrics):
            _out_of_range("metrics", f"need a non-empty subset of {METRIC_NAMES}, got {self.metrics!r}")
        for name, (lo, hi) in self.normalization_bounds.items():
            if not lo < hi:
                _out_of_range("normalization_bounds", f"{name}: low {lo!r} must be below high {hi!r}")
        missing = [c for c in self.schema.real_columns if c not in self.normalization_bounds]
        if missing:
            _out_of_range("normalization_bounds", f"no bounds for columns {missing}")
        if self.hyperparameter_grid is not None:
            if not self.hyperparameter_grid:
                self.hyperparameter_grid = None
            elif len(self.hyperparameter_grid) > MAX_GRID_ENTRIES:
                _out_of_range(
                    "hyperparameter_grid",
                    f"at most {MAX_GRID_ENTRIES} entries, got {len(self.hyperparameter_grid)}",
                )
            else:
                for i, entry in enumerate(self.hyperparameter_grid):
                    unknown = set(entry) - {"learning_rate", "local_epochs"}
                    if unknown:
                        _out_of_range("hyperparameter_grid", f"entry {i} has unknown keys {sorted(unknown)}")
                    if "learning_rate" in entry and not entry["learning_rate"] > 0:
                        _out_of_range("hyperparameter_grid", f"entry {i}: learning_rate must be positive")
                    if "local_epochs" in entry:
                        _require_int("hyperparameter_grid", entry["local_epochs"], 1)

    @property
    def feature_count(self) -> int:
        """Lags of the target plus the exogenous real columns."""
        return self.lag_window + (len(self.schema.real_columns) - 1)

    @property
    def grid_size(self) -> int:
        return len(self.hyperparameter_grid) if self.hyperparameter_grid else 1

    def hyperparameters(self, grid_index: int) -> tuple[float, int]:
        """(learning_rate, local_epochs) effective at a grid position: the base
        values, overridden by the grid entry when a grid is configured."""
        if not 0 <= grid_index < self.grid_size:
            raise NotFound(f"grid index {grid_index} outside grid of {self.grid_size}")
        lr, epochs = self.learning_rate, self.local_epochs
        if self.hyperparameter_grid:
            entry = self.hyperparameter_grid[grid_index]
            lr = entry.get("learning_rate", lr)
            epochs = entry.get("local_epochs", epochs)
        return float(lr), int(epochs)

    def to_doc(self) -> dict:
        return {
            "job_id": self.job_id,
            "origin": self.origin,
            "contract_id": self.contract_id,
            "rounds": self.rounds,
            "min_clients": self.min_clients,
            "train_test_split": self.train_test_split,
            "local_epochs": self.local_epochs,
            "learning_rate": self.learning_rate,
            "model_kind": self.model_kind,
            "lag_window": self.lag_window,
            "schema": self.schema.to_doc(),
            "metrics": list(self.metrics),
            "normalization_bounds": {k: [lo, hi] for k, (lo, hi) in self.normalization_bounds.items()},
            "deploy_threshold_default": self.deploy_threshold_default,
            "hyperparameter_grid": self.hyperparameter_grid,
            "aggregation": self.aggregation,
            "created_at": self.created_at,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "FLJob":
        return cls(
            job_id=doc["job_id"],
            origin=doc["origin"],
            contract_id=doc.get("contract_id"),
            rounds=doc["rounds"],
            min_clients=doc["min_clients"],
            train_test_split=doc["train_test_split"],
            local_epochs=doc["local_epochs"],
            learning_rate=doc["learning_rate"],
            model_kind=doc["model_kind"],
            lag_window=doc["lag_window"],
            schema=DataSchema.from_doc(doc["schema"]),
            metrics=list(doc["metrics"]),
            normalization_bounds={k: (lo, hi) for k, (lo, hi) in doc["normalization_bounds"].items()},
            deploy_threshold_default=doc["deploy_threshold_default"],
            hyperparameter_grid=doc.get("hyperparameter_grid"),
            aggregation=doc.get("aggregation", "Weighted"),
            created_at=doc.get("created_at", ""),
        )


def _build_job(values: dict, origin: str, contract_id: Optional[str]) -> FLJob:
    """Assemble a job from topic-keyed values; grid accepted under either the
    bare or the custom-topic key."""
    missing = [k for k in TOPIC_KEYS if k not in values]
    if missing:
        raise ContractIncomplete(f"missing agreed values: {missing}", missing=missing)
    schema_doc = values["data_schema"]
    try:
        schema = DataSchema(
            columns=[(name, kind) for name, kind in schema_doc["columns"]],
            frequency_minutes=float(values["time_frequency"]),
            value_ranges={k: (lo, hi) for k, (lo, hi) in values["value_ranges"].items()},
            max_missing_fraction=float(schema_doc.get("max_missing_fraction", 0.0)),
        )
    except (ValueError, KeyError, TypeError) as exc:
        _out_of_range("schema", str(exc))
    grid = values.get("hyperparameter_grid", values.get("custom:hyperparameter_grid"))
    return FLJob(
        job_id=uuid.uuid4().hex[:12],
        origin=origin,
        contract_id=contract_id,
        rounds=values["rounds"],
        min_clients=values["min_clients"],
        train_test_split=values["train_test_split"],
        local_epochs=values["local_epochs"],
        learning_rate=values["learning_rate"],
        model_kind=values["model_kind"],
        lag_window=values["lag_window"],
        metrics=list(values["evaluation_metrics"]),
        normalization_bounds={k: (lo, hi) for k, (lo, hi) in values["normalization_bounds"].items()},
        deploy_threshold_default=float(values["deploy_threshold_default"]),
        schema=schema,
        hyperparameter_grid=grid,
        aggregation=values.get("aggregation", values.get("custom:aggregation", "Weighted")),
    )


class JobFactory:
    """Compiles and persists jobs; every creation leaves a ledger record."""

    def __init__(self, ledger: Ledger):
        self._ledger = ledger
        self.jobs: dict[str, FLJob] = {}

    def get_job(self, job_id: str) -> FLJob:
        job = self.jobs.get(job_id)
        if job is None:
            raise NotFound(f"no job {job_id!r}")
        return job

    def list_jobs(self) -> list[FLJob]:
        return list(self.jobs.values())

    def job_from_contract(self, contract: GovernanceContract, actor: str = "system") -> FLJob:
        job = _build_job(contract.agreed_values, ORIGIN_CONTRACT, contract.contract_id)
        self.jobs[job.job_id] = job
        self._ledger.append(
            actor=actor,
            action="create_job",
            subject=f"job/{job.job_id}",
            detail={"job_id": job.job_id, "origin": job.origin, "contract_id": contract.contract_id},
        )
        return job

    def job_from_admin(self, admin: UserAccount, parameters: dict) -> FLJob:
        if admin.role != ROLE_SERVER_ADMIN:
            raise NotAuthorized("manual test jobs are a server-admin action")
        job = _build_job(dict(parameters), ORIGIN_ADMIN, contract_id=None)
        self.jobs[job.job_id] = job
        self._ledger.append(
            actor=admin.user_id,
            action="create_job",
            subject=f"job/{job.job_id}",
            detail={"job_id": job.job_id, "origin": job.origin},
        )
        return job
