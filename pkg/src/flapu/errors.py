"""Error catalog shared by server, agent, and CLIs.

Every error carries a stable ``code`` string that crosses the HTTP boundary
unchanged: the server serializes ``{"error": code, "detail": ...}``, clients
re-raise the matching class, and CLIs print the code on stderr.
"""

from __future__ import annotations

from typing import Any


class FlapuError(Exception):
    """Base class; ``code`` is the wire-visible identifier."""

    code = "InternalError"
    http_status = 500

    def __init__(self, detail: str = "", **context: Any):
        self.detail = detail
        self.context = context
        super().__init__(f"{self.code}: {detail}" if detail else self.code)

    def to_doc(self) -> dict:
        doc: dict[str, Any] = {"error": self.code, "detail": self.detail}
        if self.context:
            doc["context"] = self.context
        return doc


_REGISTRY: dict[str, type[FlapuError]] = {}


def _register(cls: type[FlapuError]) -> type[FlapuError]:
    _REGISTRY[cls.code] = cls
    return cls


def from_code(code: str, detail: str = "", **context: Any) -> FlapuError:
    """Rebuild a typed error from its wire code (unknown codes degrade to base)."""
    cls = _REGISTRY.get(code, FlapuError)
    err = cls(detail, **context)
    err.code = code  # preserve unknown codes verbatim
    return err


def _err(name: str, status: int) -> type[FlapuError]:
    cls = type(name, (FlapuError,), {"code": name, "http_status": status})
    return _register(cls)  # type: ignore[arg-type]


# governance
DuplicateParticipant = _err("DuplicateParticipant", 400)
UnknownParticipant = _err("UnknownParticipant", 400)
TooFewParticipants = _err("TooFewParticipants", 400)
SessionSealed = _err("SessionSealed", 409)
NotAParticipant = _err("NotAParticipant", 403)
PayloadTypeMismatch = _err("PayloadTypeMismatch", 400)
ProposalNotOpen = _err("ProposalNotOpen", 409)
TopicsUnresolved = _err("TopicsUnresolved", 409)
AlreadySealed = _err("AlreadySealed", 409)

# registry / auth
NotAuthorized = _err("NotAuthorized", 403)
DuplicateOrganizationRole = _err("DuplicateOrganizationRole", 409)
NoActiveContract = _err("NoActiveContract", 409)
ClientNotValidated = _err("ClientNotValidated", 409)
ContractNotSealed = _err("ContractNotSealed", 409)
UnknownClient = _err("UnknownClient", 401)
TokenMismatch = _err("TokenMismatch", 401)
StaleGeneration = _err("StaleGeneration", 401)
TokenAlreadyDelivered = _err("TokenAlreadyDelivered", 409)

# jobs
ContractIncomplete = _err("ContractIncomplete", 400)
ValueOutOfRange = _err("ValueOutOfRange", 400)

# runs
TooFewClients = _err("TooFewClients", 400)
UnexpectedClient = _err("UnexpectedClient", 403)
WrongPhase = _err("WrongPhase", 409)
WrongRound = _err("WrongRound", 409)
DuplicateResult = _err("DuplicateResult", 409)
GridExhausted = _err("GridExhausted", 409)
UnknownRun = _err("UnknownRun", 404)

# learning core
DegenerateBounds = _err("DegenerateBounds", 400)
TooFewRows = _err("TooFewRows", 400)
NonFiniteWeights = _err("NonFiniteWeights", 400)
DimensionMismatch = _err("DimensionMismatch", 400)
EmptyInput = _err("EmptyInput", 400)
EmptyTestSet = _err("EmptyTestSet", 400)
SplitDegenerate = _err("SplitDegenerate", 400)

# model store
DuplicateVersion = _err("DuplicateVersion", 409)
UnknownModel = _err("UnknownModel", 404)
WrongClient = _err("WrongClient", 403)
WrongStatus = _err("WrongStatus", 409)

# provenance
UnknownAction = _err("UnknownAction", 400)

# transport
AuthFailed = _err("AuthFailed", 401)
NotFound = _err("NotFound", 404)
ReplayDetected = _err("ReplayDetected", 409)
VersionConflict = _err("VersionConflict", 409)
TagMismatch = _err("TagMismatch", 401)
CorruptPayload = _err("CorruptPayload", 400)
ServerUnreachable = _err("ServerUnreachable", 503)

# agent
DataUnreadable = _err("DataUnreadable", 500)
PhaseMismatch = _err("PhaseMismatch", 409)
NoValidationData = _err("NoValidationData", 409)
NoModelDeployed = _err("NoModelDeployed", 503)
BadRequestShape = _err("BadRequestShape", 400)
InvalidSetting = _err("InvalidSetting", 400)
