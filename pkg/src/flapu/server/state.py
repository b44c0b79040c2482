"""One process worth of server-side components, wired together.

The ledger is the write-ahead log: with a data directory every record lands
on disk before the mutating call returns, and a fresh process can rebuild the
governance state from the same file. The access log records every inbound
request — the server never opens a connection toward a client, and the log
makes that auditable.
"""

from __future__ import annotations

import threading
import time
from pathlib import Path
from typing import Optional

from .. import canonical, transport
from ..governance import GovernanceEngine
from ..jobs import JobFactory
from ..modelstore import ModelStore
from ..orchestrator import Orchestrator
from ..provenance import Ledger, ProvenanceRecord, utcnow
from ..registry import ClientRegistry
from ..reporting import Reporting


class ServerState:
    def __init__(
        self,
        data_dir: Optional[Path] = None,
        phase_timeout_s: float = 600.0,
        clock=time.time,
    ):
        self.data_dir = Path(data_dir) if data_dir is not None else None
        ledger_path = None
        self.access_log_path: Optional[Path] = None
        if self.data_dir is not None:
            self.data_dir.mkdir(parents=True, exist_ok=True)
            ledger_path = self.data_dir / "ledger.jsonl"
            self.access_log_path = self.data_dir / "access.jsonl"

        self.ledger = Ledger(ledger_path)
        self.registry = ClientRegistry(
            self.ledger,
            contract_lookup=lambda cid: self.engine.state.contracts.get(cid),
        )
        self.engine = GovernanceEngine(
            self.ledger, participant_check=self.registry.is_registered_user
        )
        self.factory = JobFactory(self.ledger)
        self.store = ModelStore(
            self.ledger,
            client_is_validated=lambda cid: (
                cid in self.registry.clients
                and self.registry.clients[cid].status == "Validated"
            ),
        )
        self.orch = Orchestrator(
            self.ledger,
            self.registry,
            self.factory,
            self.store,
            phase_timeout_s=phase_timeout_s,
            clock=clock,
        )
        self.reporting = Reporting(self.ledger, self.orch, self.store, self.registry)
        self.replay_guard = transport.ReplayGuard()

        self.access_entries: list[dict] = []
        self._access_lock = threading.Lock()
        self._sweeper: Optional[threading.Thread] = None
        self._stop = threading.Event()

        # token rotation invalidates the old generation's replay window
        self.ledger.add_listener(self._forget_rotated_nonces)

    def _forget_rotated_nonces(self, record: ProvenanceRecord) -> None:
        if record.action == "rotate" and record.subject.startswith("client/"):
            self.replay_guard.clear_client(record.subject.split("/", 1)[1])

    # -- access log ------------------------------------------------------------

    def log_access(self, method: str, path: str, peer: str, status: int, principal: str = "") -> None:
        entry = {
            "at": utcnow(),
            "direction": "inbound",
            "method": method,
            "path": path,
            "peer": peer,
            "status": status,
            "principal": principal,
        }
        with self._access_lock:
            self.access_entries.append(entry)
            if self.access_log_path is not None:
                with self.access_log_path.open("a", encoding="utf-8") as fh:
                    fh.write(canonical.dumps(entry) + "\n")

    # -- background timeout sweep ------------------------------------------------

    def start_timeout_sweeper(self, interval_s: float = 5.0) -> None:
        if self._sweeper is not None:
            return

        def loop() -> None:
            while not self._stop.wait(interval_s):
                self.orch.check_timeouts()

        self._sweeper = threading.Thread(target=loop, name="timeout-sweeper", daemon=True)
        self._sweeper.start()

    def stop(self) -> None:
        self._stop.set()
        if self._sweeper is not None:
            self._sweeper.join(timeout=2)
            self._sweeper = None
