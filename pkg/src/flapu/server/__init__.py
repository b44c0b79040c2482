from .app import build_app
from .state import ServerState

__all__ = ["ServerState", "build_app"]
