"""Error taxonomy shared across the engine and the HTTP service.

Every error carries a stable machine-readable ``code`` (the HTTP layer maps
it to ``{"error": code, "detail": text}``) and a human-readable detail.
"""

from __future__ import annotations


class ReportingError(Exception):
    """Base for all domain errors."""

    code = "error"
    http_status = 400

    def __init__(self, detail: str = ""):
        super().__init__(detail or self.code)
        self.detail = detail or self.code


class ValidationError(ReportingError):
    code = "validation"


class OversizeError(ValidationError):
    code = "oversize"


class AuthorizationError(ReportingError):
    code = "authorization"
    http_status = 403


class NotFoundError(ReportingError):
    code = "not_found"
    http_status = 404


class StateError(ReportingError):
    """Operation not legal in the object's current state."""

    code = "state"
    http_status = 409


class EmptyScopeError(ReportingError):
    code = "empty_scope"


class InvalidTargetError(ReportingError):
    code = "invalid_target"


class WindowExpiredError(ReportingError):
    """Ephemeral segment purged before it could be attached."""

    code = "window_expired"
    http_status = 410


class AttestationRefusedError(ReportingError):
    """A source message failed frank verification at attestation time."""

    code = "attestation_refused"


class MacInvalidError(ReportingError):
    code = "mac_invalid"


class UnknownKeyError(ReportingError):
    """Token references a key_id the verifier does not hold."""

    code = "unknown_key"


class UnknownQuestionError(ReportingError):
    code = "unknown_question"


class GrantDeniedError(AuthorizationError):
    """Evidence fetch denied; ``reason`` is one of no_grant/expired/exhausted."""

    code = "grant_denied"

    def __init__(self, reason: str, detail: str = ""):
        super().__init__(detail or reason)
        self.reason = reason


class AssignmentImpossibleError(ReportingError):
    code = "assignment_impossible"


class BlockedError(StateError):
    """Decision blocked by a pending critical disclosure request."""

    code = "blocked"


class ConfigError(ReportingError):
    """Invalid service configuration; detail names the offending field."""

    code = "config"

    def __init__(self, field: str, problem: str):
        super().__init__(f"{field}: {problem}")
        self.field = field
