"""Agent configuration: a TOML file for identity and paths, plus a small set
of runtime-tunable settings.

Two rules keep the silo sovereign:

- Nothing the coordination server sends can change this configuration. The
  tunables move only through :func:`apply_settings`, which is reachable from
  the local admin API and CLI alone.
- Token material lives outside the config file, in a mode-0600 JSON file that
  the agent re-reads whenever authentication fails. Rotations therefore only
  require replacing that one file.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib  # type: ignore[no-redef]

from ..errors import AuthFailed, InvalidSetting

TOKEN_FILE_MODE = 0o600


def _positive(name: str, value: Any) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not value > 0:
        raise InvalidSetting(f"{name} must be a positive number, got {value!r}")
    return float(value)


def _count(name: str, value: Any) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < 0:
        raise InvalidSetting(f"{name} must be a non-negative integer, got {value!r}")
    return value


@dataclass(frozen=True)
class AgentConfig:
    """Everything one agent process needs. Frozen so that settings changes
    swap the whole object in one assignment -- a half-applied change can never
    be observed."""

    # identity and connectivity
    server_url: str
    client_id: str
    token_path: Path
    # local data
    data_path: Path
    state_dir: Path
    fixed_test_path: Optional[Path] = None
    # local administration
    admin_token: str = ""
    bind_host: str = "127.0.0.1"
    bind_port: int = 8471
    instance: str = ""
    # tunables (the local admin may change these at runtime)
    deploy_threshold: Optional[float] = None  # None: use the contract default
    monitor_threshold: float = 0.5
    monitor_period_s: float = 300.0
    personalization_epochs: int = 0
    personalization_learning_rate: float = 0.05
    # polling
    poll_base_s: float = 5.0
    poll_factor: float = 1.5
    poll_max_s: float = 60.0

    def __post_init__(self):
        if not self.server_url:
            raise InvalidSetting("server_url must not be empty")
        if not self.client_id:
            raise InvalidSetting("client_id must not be empty")
        if self.deploy_threshold is not None:
            _positive("deploy_threshold", self.deploy_threshold)
        _positive("monitor_threshold", self.monitor_threshold)
        _positive("monitor_period_s", self.monitor_period_s)
        _count("personalization_epochs", self.personalization_epochs)
        _positive("personalization_learning_rate", self.personalization_learning_rate)
        _positive("poll_base_s", self.poll_base_s)
        if self.poll_factor < 1.0:
            raise InvalidSetting(f"poll_factor must be >= 1, got {self.poll_factor!r}")
        if self.poll_max_s < self.poll_base_s:
            raise InvalidSetting("poll_max_s must be >= poll_base_s")

    def settings_doc(self) -> dict:
        """The runtime-tunable subset, as shown and edited over the local API."""
        return {name: getattr(self, name) for name in MUTABLE_SETTINGS}


def _threshold_or_none(name: str, value: Any) -> Optional[float]:
    if value is None:
        return None
    return _positive(name, value)


# name -> normalizer; anything else in a settings delta is rejected.
MUTABLE_SETTINGS = {
    "deploy_threshold": lambda v: _threshold_or_none("deploy_threshold", v),
    "monitor_threshold": lambda v: _positive("monitor_threshold", v),
    "monitor_period_s": lambda v: _positive("monitor_period_s", v),
    "personalization_epochs": lambda v: _count("personalization_epochs", v),
    "personalization_learning_rate": lambda v: _positive("personalization_learning_rate", v),
}


def apply_settings(config: AgentConfig, delta: dict) -> AgentConfig:
    """Return a new config with the delta applied, or raise ``InvalidSetting``
    leaving the original untouched. All-or-nothing: the first bad entry aborts
    the whole change."""
    if not isinstance(delta, dict):
        raise InvalidSetting("settings delta must be an object")
    normalized = {}
    for name, value in delta.items():
        normalizer = MUTABLE_SETTINGS.get(name)
        if normalizer is None:
            raise InvalidSetting(f"unknown or immutable setting {name!r}")
        normalized[name] = normalizer(value)
    return dataclasses.replace(config, **normalized)


def load_config(path: str | Path) -> AgentConfig:
    """Parse a TOML config file. Relative paths are resolved against the file's
    own directory, so a silo's config bundle can be moved as a unit."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except OSError as exc:
        raise InvalidSetting(f"cannot read config file {path}: {exc}")
    except tomllib.TOMLDecodeError as exc:
        raise InvalidSetting(f"config file {path} is not valid TOML: {exc}")

    base = path.parent

    def resolve(value: Optional[str]) -> Optional[Path]:
        if value is None:
            return None
        p = Path(value)
        return p if p.is_absolute() else base / p

    server = doc.get("server", {})
    data = doc.get("data", {})
    local = doc.get("local", {})
    settings = doc.get("settings", {})
    poll = doc.get("poll", {})
    try:
        return AgentConfig(
            server_url=server.get("url", ""),
            client_id=server.get("client_id", ""),
            token_path=resolve(server.get("token_path", "token.json")),
            instance=server.get("instance", ""),
            data_path=resolve(data.get("path", "data.csv")),
            fixed_test_path=resolve(data.get("fixed_test_path")),
            state_dir=resolve(local.get("state_dir", "state")),
            admin_token=local.get("admin_token", ""),
            bind_host=local.get("bind_host", "127.0.0.1"),
            bind_port=int(local.get("bind_port", 8471)),
            deploy_threshold=settings.get("deploy_threshold"),
            monitor_threshold=settings.get("monitor_threshold", 0.5),
            monitor_period_s=settings.get("monitor_period_s", 300.0),
            personalization_epochs=settings.get("personalization_epochs", 0),
            personalization_learning_rate=settings.get("personalization_learning_rate", 0.05),
            poll_base_s=poll.get("base_s", 5.0),
            poll_factor=poll.get("factor", 1.5),
            poll_max_s=poll.get("max_s", 60.0),
        )
    except (TypeError, ValueError) as exc:
        raise InvalidSetting(f"config file {path}: {exc}")


def read_token_file(path: str | Path) -> tuple[int, bytes]:
    """Load (generation, secret) from the token material file.

    Failures surface as ``AuthFailed``: from the agent's point of view a
    missing or garbled token file and a rejected token are the same incident,
    and both end with the operator re-provisioning the file.
    """
    try:
        doc = json.loads(Path(path).read_text())
        return int(doc["generation"]), bytes.fromhex(doc["secret"])
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise AuthFailed(f"token material at {path} is unreadable: {exc}")


def write_token_file(path: str | Path, doc: dict) -> None:
    """Persist delivered token material with owner-only permissions."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd = os.open(path, os.O_WRONLY | os.O_CREAT | os.O_TRUNC, TOKEN_FILE_MODE)
    with os.fdopen(fd, "w") as fh:
        fh.write(json.dumps(doc, indent=2, sort_keys=True))
    os.chmod(path, TOKEN_FILE_MODE)  # in case the file pre-existed with wider bits
