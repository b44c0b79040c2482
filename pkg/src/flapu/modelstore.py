"""Versioned global-model registry and pull-able deployment directives.

Every aggregated model is stored immutably with a content hash; deployment
never pushes anything — the server publishes directives that clients discover
on their next poll, fetch, and acknowledge.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable, Optional

from . import canonical
from .errors import (
    ClientNotValidated,
    DuplicateVersion,
    UnknownModel,
    WrongClient,
    WrongStatus,
)
from .learning import ModelWeights
from .provenance import Ledger, utcnow

ISSUED_BY_RUN = "RunCompletion"
ISSUED_BY_ADMIN = "ServerAdmin"

STATUS_PUBLISHED = "Published"
STATUS_FETCHED = "Fetched"
STATUS_ACKNOWLEDGED = "Acknowledged"
_STATUS_ORDER = (STATUS_PUBLISHED, STATUS_FETCHED, STATUS_ACKNOWLEDGED)

ACK_OUTCOMES = ("deployed", "rejected")


@dataclass
class ModelVersion:
    model_id: str
    run_id: str
    grid_index: int
    round: int
    weights_doc: dict
    created_at: str = field(default_factory=utcnow)
    content_hash: str = ""

    def __post_init__(self):
        if not self.content_hash:
            self.content_hash = canonical.content_hash(self.weights_doc)

    def verify(self) -> bool:
        return canonical.content_hash(self.weights_doc) == self.content_hash

    def weights(self) -> ModelWeights:
        return ModelWeights.from_doc(self.weights_doc)

    def to_doc(self, include_weights: bool = True) -> dict:
        doc = {
            "model_id": self.model_id,
            "run_id": self.run_id,
            "grid_index": self.grid_index,
            "round": self.round,
            "created_at": self.created_at,
            "content_hash": self.content_hash,
        }
        if include_weights:
            doc["weights"] = self.weights_doc
        return doc

    @classmethod
    def from_doc(cls, doc: dict) -> "ModelVersion":
        return cls(
            model_id=doc["model_id"],
            run_id=doc["run_id"],
            grid_index=doc["grid_index"],
            round=doc["round"],
            weights_doc=doc["weights"],
            created_at=doc["created_at"],
            content_hash=doc["content_hash"],
        )


@dataclass
class DeploymentDirective:
    directive_id: str
    serial: int  # strictly increasing per target client
    client_id: str
    model_id: str
    issued_by: str  # RunCompletion | ServerAdmin
    issued_at: str = field(default_factory=utcnow)
    status: str = STATUS_PUBLISHED
    outcome: Optional[str] = None  # deployed | rejected, once acknowledged
    gate_metric: Optional[float] = None
    recipe: dict = field(default_factory=dict)  # preprocessing the model expects

    def _advance(self, status: str) -> None:
        if _STATUS_ORDER.index(status) <= _STATUS_ORDER.index(self.status):
            raise WrongStatus(f"directive {self.directive_id} is {self.status}; cannot move to {status}")
        self.status = status

    def to_doc(self) -> dict:
        return {
            "directive_id": self.directive_id,
            "serial": self.serial,
            "client_id": self.client_id,
            "model_id": self.model_id,
            "issued_by": self.issued_by,
            "issued_at": self.issued_at,
            "status": self.status,
            "outcome": self.outcome,
            "gate_metric": self.gate_metric,
            "recipe": self.recipe,
        }


class ModelStore:
    """Append-only model versions plus per-client directive streams."""

    def __init__(self, ledger: Ledger, client_is_validated: Optional[Callable[[str], bool]] = None):
        self._ledger = ledger
        self._client_ok = client_is_validated or (lambda _cid: True)
        self._lock = threading.RLock()
        self.models: dict[str, ModelVersion] = {}
        self._by_coords: dict[tuple[str, int, int], str] = {}
        self.directives: dict[str, DeploymentDirective] = {}
        self._per_client: dict[str, list[DeploymentDirective]] = {}

    # -- models -----------------------------------------------------------

    def store_model(
        self,
        run_id: str,
        grid_index: int,
        round: int,
        weights: ModelWeights,
        actor: str = "system",
    ) -> ModelVersion:
        with self._lock:
            coords = (run_id, int(grid_index), int(round))
            if coords in self._by_coords:
                raise DuplicateVersion(f"model for run {run_id} grid {grid_index} round {round} already stored")
            version = ModelVersion(
                model_id=f"{run_id}.g{grid_index}.r{round}",
                run_id=run_id,
                grid_index=int(grid_index),
                round=int(round),
                weights_doc=weights.to_doc(trained_on_run=run_id, round=int(round)),
            )
            self.models[version.model_id] = version
            self._by_coords[coords] = version.model_id
            self._ledger.append(
                actor=actor,
                action="store_model",
                subject=f"model/{version.model_id}",
                detail={"model_id": version.model_id, "content_hash": version.content_hash},
            )
            return version

    def get_model(self, model_id: str) -> ModelVersion:
        version = self.models.get(model_id)
        if version is None:
            raise UnknownModel(f"no model {model_id!r}")
        return version

    def versions_for_run(self, run_id: str, grid_index: Optional[int] = None) -> list[ModelVersion]:
        with self._lock:
            out = [
                self.models[mid]
                for (rid, g, _r), mid in sorted(self._by_coords.items(), key=lambda kv: kv[0])
                if rid == run_id and (grid_index is None or g == grid_index)
            ]
            return out

    def latest_model(self, run_id: str, grid_index: int) -> ModelVersion:
        versions = self.versions_for_run(run_id, grid_index)
        if not versions:
            raise UnknownModel(f"run {run_id} grid {grid_index} has no stored models")
        return versions[-1]

    def lineage(self, model_id: str) -> list[ModelVersion]:
        """The chain from the given version back to the run's initial model."""
        tip = self.get_model(model_id)
        chain = [
            v for v in self.versions_for_run(tip.run_id, tip.grid_index) if v.round <= tip.round
        ]
        return list(reversed(chain))

    # -- deployment directives ---------------------------------------------

    def publish_deployment(
        self,
        targets: list[str],
        model_id: str,
        issued_by: str,
        actor: str = "system",
        recipe: Optional[dict] = None,
    ) -> list[DeploymentDirective]:
        with self._lock:
            self.get_model(model_id)  # UnknownModel if absent
            if issued_by not in (ISSUED_BY_RUN, ISSUED_BY_ADMIN):
                raise WrongStatus(f"unknown issuer {issued_by!r}")
            bad = [cid for cid in targets if not self._client_ok(cid)]
            if bad:
                raise ClientNotValidated(f"cannot deploy to non-validated clients {bad}")
            issued = []
            for client_id in targets:
                serial = len(self._per_client.get(client_id, ())) + 1
                directive = DeploymentDirective(
                    directive_id=f"{client_id}-d{serial}",
                    serial=serial,
                    client_id=client_id,
                    model_id=model_id,
                    issued_by=issued_by,
                    recipe=dict(recipe or {}),
                )
                self.directives[directive.directive_id] = directive
                self._per_client.setdefault(client_id, []).append(directive)
                issued.append(directive)
            self._ledger.append(
                actor=actor,
                action="publish_deployment",
                subject=f"model/{model_id}",
                detail={"targets": list(targets), "issued_by": issued_by,
                        "directives": [d.directive_id for d in issued]},
            )
            return issued

    def directives_for(self, client_id: str, mark_fetched: bool = True) -> list[DeploymentDirective]:
        """The client's directive stream, oldest first. Fetching is the
        delivery event: Published entries move to Fetched."""
        with self._lock:
            stream = list(self._per_client.get(client_id, ()))
            if mark_fetched:
                newly = [d for d in stream if d.status == STATUS_PUBLISHED]
                for directive in newly:
                    directive._advance(STATUS_FETCHED)
                if newly:
                    self._ledger.append(
                        actor=client_id,
                        action="deployment_fetched",
                        subject=f"client/{client_id}",
                        detail={"directives": [d.directive_id for d in newly]},
                    )
            return stream

    def acknowledge(
        self,
        directive_id: str,
        client_id: str,
        outcome: str,
        gate_metric: Optional[float] = None,
    ) -> DeploymentDirective:
        with self._lock:
            directive = self.directives.get(directive_id)
            if directive is None:
                raise UnknownModel(f"no directive {directive_id!r}")
            if directive.client_id != client_id:
                raise WrongClient(f"directive {directive_id} does not target {client_id}")
            if directive.status != STATUS_FETCHED:
                raise WrongStatus(f"directive {directive_id} is {directive.status}, not Fetched")
            if outcome not in ACK_OUTCOMES:
                raise WrongStatus(f"acknowledgment outcome must be one of {ACK_OUTCOMES}")
            directive._advance(STATUS_ACKNOWLEDGED)
            directive.outcome = outcome
            directive.gate_metric = None if gate_metric is None else float(gate_metric)
            self._ledger.append(
                actor=client_id,
                action="acknowledge",
                subject=f"deployment/{directive_id}",
                outcome=outcome,
                detail={"directive_id": directive_id, "gate_metric": directive.gate_metric},
            )
            return directive
