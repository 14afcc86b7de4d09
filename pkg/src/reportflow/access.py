"""Evidence access control: grants with expiry/view budgets, identifier
disclosure policies, report-scoped pseudonyms, and moderator tags."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable

from .errors import ValidationError
from .lifecycle import ReportState
from .model import AccountId, Role

MAX_TAG_LEN = 64


class IdentifierPolicy(str, Enum):
    IMMEDIATE = "immediate"
    DELAYED_UNTIL_DECISION = "delayed_until_decision"
    SENIOR_ONLY = "senior_only"


# States in which a decision exists; delayed disclosure unlocks here.
_POST_DECISION_STATES = frozenset(
    {
        ReportState.DECIDED,
        ReportState.NOTIFIED,
        ReportState.APPEAL_OPEN,
        ReportState.APPEAL_RESOLVED,
        ReportState.CLOSED,
        ReportState.DISMISSED,
    }
)


def identity_visible(
    policy: IdentifierPolicy, report_state: ReportState, caller_roles: frozenset[Role]
) -> bool:
    """Whether raw identifiers resolve for this caller right now.

    Terminated reports never reached a decision, so delayed disclosure
    never unlocks for them.
    """
    if policy is IdentifierPolicy.IMMEDIATE:
        return True
    if policy is IdentifierPolicy.DELAYED_UNTIL_DECISION:
        return report_state in _POST_DECISION_STATES
    return Role.SENIOR_MODERATOR in caller_roles


@dataclass
class AccessGrant:
    grant_id: str
    report_id: str
    grantees: frozenset[AccountId]
    expires_at: int | None  # epoch ms; None = no expiry
    remaining_views: int | None  # None = unlimited
    revoked: bool = False

    def covers(self, moderator: AccountId) -> bool:
        return moderator in self.grantees

    def is_expired(self, now: int) -> bool:
        return self.expires_at is not None and now > self.expires_at

    def is_exhausted(self) -> bool:
        return self.remaining_views is not None and self.remaining_views <= 0

    def is_live(self, now: int) -> bool:
        return not self.revoked and not self.is_expired(now) and not self.is_exhausted()

    def consume(self) -> None:
        """Decrement on successful render only; caller holds the engine lock."""
        if self.remaining_views is not None:
            self.remaining_views -= 1


@dataclass(frozen=True)
class Pseudonym:
    label: str  # "Participant-<k>"
    role: str  # reporter | reported | bystander


class PseudonymMap:
    """Report-scoped account<->pseudonym bijection.

    Ordinals are assignment-ordered: Participant-1 is always the reporter,
    Participant-2 the reported, then bystanders by first appearance. The
    map only ever grows; labels are stable for the report's lifetime and
    carry nothing linkable across reports.
    """

    def __init__(self, reporter: AccountId, reported: AccountId):
        self._by_account: dict[AccountId, Pseudonym] = {}
        self._by_label: dict[str, AccountId] = {}
        self._add(reporter, "reporter")
        self._add(reported, "reported")

    def _add(self, account: AccountId, role: str) -> Pseudonym:
        label = f"Participant-{len(self._by_account) + 1}"
        pseud = Pseudonym(label=label, role=role)
        self._by_account[account] = pseud
        self._by_label[label] = account
        return pseud

    def ensure(self, account: AccountId) -> Pseudonym:
        """Label for an account, assigning a bystander ordinal on first use."""
        existing = self._by_account.get(account)
        if existing is not None:
            return existing
        return self._add(account, "bystander")

    def get(self, account: AccountId) -> Pseudonym | None:
        return self._by_account.get(account)

    def account_for(self, label: str) -> AccountId | None:
        return self._by_label.get(label)

    def items(self) -> list[tuple[AccountId, Pseudonym]]:
        return sorted(self._by_account.items(), key=lambda kv: kv[1].label)

    def labels(self) -> list[Pseudonym]:
        return [p for _, p in self.items()]


@dataclass(frozen=True)
class ModeratorTag:
    subject: AccountId
    label: str
    author: AccountId  # moderator
    created_at: int

    def __post_init__(self):
        if not self.label.strip():
            raise ValidationError("tag label must be non-empty")
        if len(self.label) > MAX_TAG_LEN:
            raise ValidationError(f"tag label exceeds {MAX_TAG_LEN} chars")


def moderator_handle(account_id: AccountId) -> str:
    """Stable pseudonymous handle; never contains the account id."""
    return "mod-" + hashlib.sha256(account_id.encode("utf-8")).hexdigest()[:8]


def account_ref(account_id: AccountId) -> str:
    """Opaque stable reference for audit objects outside any report scope."""
    return "acct:" + hashlib.sha256(account_id.encode("utf-8")).hexdigest()[:12]
