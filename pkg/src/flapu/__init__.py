"""Cross-silo federated learning orchestration server and client agent.

The package is organized around the two deployable systems:

* the FL server (``flapu.server``), which hosts governance negotiation,
  client registration and token auth, job creation, run orchestration,
  the model registry, and the provenance ledger, all behind a pull-only
  HTTP resource API; and
* the FL client agent (``flapu.agent``), which polls the server for
  tasks, runs the local pipeline (validate, preprocess, train, evaluate),
  gates model deployment behind local thresholds, and serves inference.

Shared numerics (linear model training, federated averaging, metrics,
dataset validation) live in ``flapu.learning``.
"""

__version__ = "0.1.0"
