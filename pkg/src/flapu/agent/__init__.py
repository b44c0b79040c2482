"""Silo-side agent: polls the coordination server, trains on local data that
never leaves the machine, and serves the deployed model to local applications.

The package splits along trust boundaries:

- ``config``   -- operator-provided settings; only the local admin may change them
- ``data``     -- reading the silo's CSV time series
- ``client``   -- signed HTTP calls to the coordination server (always outbound)
- ``pipeline`` -- pure learning steps: validate, train, evaluate, personalize, gate
- ``runtime``  -- the long-running agent: poll loop, deployment decisions, monitoring
- ``local_api``-- the in-silo HTTP surface: predictions plus local administration
"""

from .client import ServerClient
from .config import AgentConfig, apply_settings, load_config, read_token_file, write_token_file
from .data import load_dataset
from .local_api import build_local_app
from .runtime import Agent, DeployedModel

__all__ = [
    "Agent",
    "AgentConfig",
    "DeployedModel",
    "ServerClient",
    "apply_settings",
    "build_local_app",
    "load_config",
    "load_dataset",
    "read_token_file",
    "write_token_file",
]
