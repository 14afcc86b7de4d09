"""Progressive disclosure and consent-gated bystander cross-examination.

Moderators can ask the reporter to reveal specific minimized portions, with
a stated rationale and consequence; bystanders can be invited — only after
reporter consent — to vouch, flag, or disclose. Flag mode is deliberately
content-free: identifiers travel, bodies never do.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Any

from .errors import ValidationError
from .minimize import Level
from .model import AccountId


class Criticality(str, Enum):
    INFORMATIONAL = "informational"
    CRITICAL = "critical"


class RequestState(str, Enum):
    PENDING = "pending"
    GRANTED = "granted"
    DENIED = "denied"
    WITHDRAWN = "withdrawn"


DEFAULT_CONSEQUENCES = {
    Criticality.INFORMATIONAL: (
        "Declining may reduce the credibility of your evidence."
    ),
    Criticality.CRITICAL: (
        "This content is considered central to the case; declining may lead to the report being dismissed."
    ),
}


@dataclass
class DisclosureRequest:
    request_id: str
    report_id: str
    requester: AccountId  # moderator; transcripts render the handle
    targets: tuple[str, ...]  # msg_ids currently below the requested level
    justification: str
    criticality: Criticality
    consequence_note: str
    requested_level: Level = Level.FULL
    state: RequestState = RequestState.PENDING

    def __post_init__(self):
        if not self.justification.strip():
            raise ValidationError("a disclosure request requires a justification")
        if not self.targets:
            raise ValidationError("a disclosure request needs at least one target")

    def resolve(self, new_state: RequestState) -> None:
        if self.state is not RequestState.PENDING:
            raise ValidationError(f"request already {self.state.value}")
        self.state = new_state

    def to_json(self, requester_label: str) -> dict[str, Any]:
        return {
            "request_id": self.request_id,
            "report_id": self.report_id,
            "requester": requester_label,
            "targets": list(self.targets),
            "justification": self.justification,
            "criticality": self.criticality.value,
            "consequence_note": self.consequence_note,
            "requested_level": self.requested_level.value,
            "state": self.state.value,
        }


class ConsentState(str, Enum):
    AWAITING_REPORTER = "awaiting_reporter"
    REPORTER_APPROVED = "reporter_approved"
    REPORTER_DECLINED = "reporter_declined"


class Involvement(str, Enum):
    YES_NO = "yes_no"
    FLAG_SUSPICIOUS = "flag_suspicious"
    DISCLOSE_MESSAGES = "disclose_messages"


@dataclass
class BystanderInvite:
    invite_id: str
    report_id: str
    bystander: AccountId
    involvement: Involvement  # fixed at creation
    consent: ConsentState = ConsentState.AWAITING_REPORTER
    contacted: bool = False

    def to_json(self, bystander_label: str) -> dict[str, Any]:
        return {
            "invite_id": self.invite_id,
            "report_id": self.report_id,
            "bystander": bystander_label,
            "involvement": self.involvement.value,
            "consent": self.consent.value,
            "contacted": self.contacted,
        }


@dataclass(frozen=True)
class BystanderFinding:
    invite_id: str
    verdict: bool | None = None  # yes_no mode
    flags: tuple[str, ...] = ()  # flag mode: msg_ids only, never content
    # disclose mode: (msg_ref, the bystander's own description of it)
    disclosures: tuple[tuple[str, str], ...] = ()

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {"invite_id": self.invite_id}
        if self.verdict is not None:
            out["verdict"] = self.verdict
        if self.flags:
            out["flags"] = list(self.flags)
        if self.disclosures:
            out["disclosures"] = [
                {"msg_ref": ref, "description": text} for ref, text in self.disclosures
            ]
        return out


def validate_finding_shape(involvement: Involvement, finding: BystanderFinding) -> None:
    """The finding must carry exactly the fields its involvement mode allows."""
    if involvement is Involvement.YES_NO:
        ok = finding.verdict is not None and not finding.flags and not finding.disclosures
    elif involvement is Involvement.FLAG_SUSPICIOUS:
        ok = finding.verdict is None and bool(finding.flags) and not finding.disclosures
    else:
        ok = finding.verdict is None and not finding.flags and bool(finding.disclosures)
    if not ok:
        raise ValidationError(
            f"finding shape does not match involvement {involvement.value}"
        )
