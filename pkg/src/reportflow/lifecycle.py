"""Report state machine and the decision/notification/appeal vocabulary.

The transition table is the single source of truth: the engine consults it
for every move, conformance tests enumerate it exhaustively, and it exports
as JSON so the console can mirror it without duplicating policy.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Sequence

from .errors import (
    AssignmentImpossibleError,
    StateError,
    ValidationError,
)
from .model import AccountId


class ReportState(str, Enum):
    FILED = "filed"
    ASSEMBLING = "assembling"
    UNDER_REVIEW = "under_review"
    DECIDED = "decided"
    NOTIFIED = "notified"
    APPEAL_OPEN = "appeal_open"
    APPEAL_RESOLVED = "appeal_resolved"
    CLOSED = "closed"
    DISMISSED = "dismissed"
    TERMINATED = "terminated"


# appeal_resolved is terminal except for the single close edge.
TERMINAL_STATES = frozenset(
    {ReportState.CLOSED, ReportState.DISMISSED, ReportState.TERMINATED}
)

# operation -> {from_state: to_state}
TRANSITIONS: dict[str, dict[ReportState, ReportState]] = {
    "assemble": {ReportState.FILED: ReportState.ASSEMBLING},
    "add_evidence": {ReportState.ASSEMBLING: ReportState.ASSEMBLING},
    "assign": {ReportState.ASSEMBLING: ReportState.UNDER_REVIEW},
    "review_action": {ReportState.UNDER_REVIEW: ReportState.UNDER_REVIEW},
    "decide": {ReportState.UNDER_REVIEW: ReportState.DECIDED},
    "notify": {ReportState.DECIDED: ReportState.NOTIFIED},
    "appeal": {ReportState.NOTIFIED: ReportState.APPEAL_OPEN},
    "resolve_appeal_affirm": {ReportState.APPEAL_OPEN: ReportState.APPEAL_RESOLVED},
    "resolve_appeal_reverse": {ReportState.APPEAL_OPEN: ReportState.DISMISSED},
    "close": {
        ReportState.NOTIFIED: ReportState.CLOSED,
        ReportState.APPEAL_RESOLVED: ReportState.CLOSED,
    },
    "terminate": {
        ReportState.FILED: ReportState.TERMINATED,
        ReportState.ASSEMBLING: ReportState.TERMINATED,
        ReportState.UNDER_REVIEW: ReportState.TERMINATED,
        ReportState.DECIDED: ReportState.TERMINATED,
        ReportState.NOTIFIED: ReportState.TERMINATED,
        ReportState.APPEAL_OPEN: ReportState.TERMINATED,
    },
}


def next_state(state: ReportState, operation: str) -> ReportState:
    table = TRANSITIONS.get(operation)
    if table is None:
        raise StateError(f"unknown operation {operation!r}")
    to = table.get(state)
    if to is None:
        raise StateError(f"operation {operation!r} not allowed in state {state.value}")
    return to


def can_transition(state: ReportState, operation: str) -> bool:
    return state in TRANSITIONS.get(operation, {})


def transition_table_json() -> dict[str, Any]:
    """The published table, for docs and UI conformance tests."""
    return {
        "states": [s.value for s in ReportState],
        "terminal": sorted(s.value for s in TERMINAL_STATES | {ReportState.APPEAL_RESOLVED}),
        "transitions": {
            op: {frm.value: to.value for frm, to in table.items()}
            for op, table in sorted(TRANSITIONS.items())
        },
    }


class Outcome(str, Enum):
    UPHOLD = "uphold"
    DISMISS = "dismiss"


class Punishment(str, Enum):
    NONE = "none"
    WARN = "warn"
    MUTE = "mute"
    BAN = "ban"


class PunishmentTiming(str, Enum):
    IMMEDIATE = "immediate"
    DELAYED_UNTIL_APPEAL = "delayed_until_appeal"


@dataclass(frozen=True)
class Decision:
    outcome: Outcome
    policy_violated: str | None
    punishment: Punishment
    punishment_timing: PunishmentTiming
    rationale: str

    def __post_init__(self):
        if self.outcome is Outcome.DISMISS and self.punishment is not Punishment.NONE:
            raise ValidationError("a dismissed report carries no punishment")

    def to_json(self) -> dict[str, Any]:
        return {
            "outcome": self.outcome.value,
            "policy_violated": self.policy_violated,
            "punishment": self.punishment.value,
            "punishment_timing": self.punishment_timing.value,
            "rationale": self.rationale,
        }

    @classmethod
    def from_json(cls, o: dict[str, Any]) -> "Decision":
        try:
            return cls(
                outcome=Outcome(o["outcome"]),
                policy_violated=o.get("policy_violated"),
                punishment=Punishment(o.get("punishment", "none")),
                punishment_timing=PunishmentTiming(o.get("punishment_timing", "immediate")),
                rationale=o.get("rationale", ""),
            )
        except ValueError as exc:
            raise ValidationError(f"malformed decision: {exc}") from exc


class Granularity(str, Enum):
    GENERIC = "generic"
    POLICY_ONLY = "policy_only"
    MESSAGE_LEVEL = "message_level"


@dataclass(frozen=True)
class AssignmentRequest:
    preferred: tuple[AccountId, ...] = ()
    excluded: tuple[tuple[AccountId, str], ...] = ()  # (moderator, justification)

    def __post_init__(self):
        for mod, justification in self.excluded:
            if not justification.strip():
                raise ValidationError(f"exclusion of {mod} requires a justification")

    @classmethod
    def from_json(cls, o: dict[str, Any]) -> "AssignmentRequest":
        return cls(
            preferred=tuple(o.get("preferred", [])),
            excluded=tuple((e["moderator"], e.get("justification", "")) for e in o.get("excluded", [])),
        )


def select_moderators(
    pool: Sequence[AccountId],
    request: AssignmentRequest,
    conflicted: frozenset[AccountId],
    count: int = 1,
) -> list[AccountId]:
    """Pick the assigned set: conflicted moderators are struck regardless of
    the request, justified exclusions next, preferred moderators honored
    when still eligible, then the pool fills up to ``count`` in pool order.
    """
    excluded_ids = {mod for mod, _ in request.excluded}
    eligible = [m for m in pool if m not in conflicted and m not in excluded_ids]
    if not eligible:
        raise AssignmentImpossibleError("no eligible moderators remain after exclusions")
    assigned = [m for m in request.preferred if m in eligible]
    for m in eligible:
        if len(assigned) >= count:
            break
        if m not in assigned:
            assigned.append(m)
    return assigned


@dataclass(frozen=True)
class ModeratorProfile:
    """Reporter-facing moderator summary; carries no account id or name."""

    handle: str
    tenure_days: int
    reports_reviewed: int
    endorsed_values: tuple[str, ...] = ()

    def to_json(self) -> dict[str, Any]:
        return {
            "handle": self.handle,
            "tenure_days": self.tenure_days,
            "reports_reviewed": self.reports_reviewed,
            "endorsed_values": list(self.endorsed_values),
        }
