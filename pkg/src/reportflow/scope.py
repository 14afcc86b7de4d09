"""Scope filters: selecting the candidate messages a report may draw from.

Filters are structural only (recency, time window, participants, cross
conversation); there is no relevance ranking. Ties in sent_at break by
msg_id so every filter is deterministic and audit-replayable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Sequence

from .errors import ValidationError
from .model import AccountId, Conversation, Message, message_sort_key


class ScopeMode(str, Enum):
    ALL_IN_CONVERSATION = "all_in_conversation"
    LAST_N = "last_n"
    TIME_WINDOW = "time_window"
    PARTICIPANTS = "participants"
    CROSS_CONVERSATION = "cross_conversation"


@dataclass(frozen=True)
class ScopePolicy:
    mode: ScopeMode
    n: int | None = None
    window: tuple[int, int] | None = None  # [start_ms, end_ms] inclusive
    included_senders: frozenset[AccountId] = frozenset()
    inner: "ScopePolicy | None" = None  # cross_conversation only

    def __post_init__(self):
        if self.mode is ScopeMode.LAST_N:
            if self.n is None or self.n < 1:
                raise ValidationError("last_n requires n >= 1")
        if self.mode is ScopeMode.TIME_WINDOW:
            if self.window is None or self.window[0] > self.window[1]:
                raise ValidationError("time_window requires start_ms <= end_ms")
        if self.mode is ScopeMode.PARTICIPANTS and not self.included_senders:
            raise ValidationError("participants scope requires at least one sender")
        if self.mode is ScopeMode.CROSS_CONVERSATION:
            if self.inner is None:
                raise ValidationError("cross_conversation requires an inner policy")
            if self.inner.mode is ScopeMode.CROSS_CONVERSATION:
                raise ValidationError("inner policy may not be cross_conversation")

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {"mode": self.mode.value}
        if self.n is not None:
            out["n"] = self.n
        if self.window is not None:
            out["window"] = [self.window[0], self.window[1]]
        if self.included_senders:
            out["senders"] = sorted(self.included_senders)
        if self.inner is not None:
            out["inner"] = self.inner.to_json()
        return out

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> "ScopePolicy":
        try:
            mode = ScopeMode(obj["mode"])
        except (KeyError, ValueError) as exc:
            raise ValidationError(f"unknown scope mode: {obj.get('mode')!r}") from exc
        window = tuple(obj["window"]) if obj.get("window") is not None else None
        if window is not None and len(window) != 2:
            raise ValidationError("window must be [start_ms, end_ms]")
        inner = cls.from_json(obj["inner"]) if obj.get("inner") else None
        return cls(
            mode=mode,
            n=obj.get("n"),
            window=window,  # type: ignore[arg-type]
            included_senders=frozenset(obj.get("senders", [])),
            inner=inner,
        )


def last_n(n: int) -> ScopePolicy:
    return ScopePolicy(mode=ScopeMode.LAST_N, n=n)


def time_window(start_ms: int, end_ms: int) -> ScopePolicy:
    return ScopePolicy(mode=ScopeMode.TIME_WINDOW, window=(start_ms, end_ms))


def participants(senders: Iterable[AccountId]) -> ScopePolicy:
    return ScopePolicy(mode=ScopeMode.PARTICIPANTS, included_senders=frozenset(senders))


def all_in_conversation() -> ScopePolicy:
    return ScopePolicy(mode=ScopeMode.ALL_IN_CONVERSATION)


def cross_conversation(inner: ScopePolicy) -> ScopePolicy:
    return ScopePolicy(mode=ScopeMode.CROSS_CONVERSATION, inner=inner)


# Shipped presets; the counts mirror the per-platform forwarding limits the
# presets are named after.
PRESETS: dict[str, ScopePolicy] = {
    "google-chat-50": last_n(50),
    "messenger-30": last_n(30),
    "whatsapp-5": last_n(5),
}


def _filter_one(policy: ScopePolicy, messages: Sequence[Message]) -> list[Message]:
    if policy.mode is ScopeMode.ALL_IN_CONVERSATION:
        return list(messages)
    if policy.mode is ScopeMode.LAST_N:
        assert policy.n is not None
        keep = sorted(messages, key=message_sort_key)[-policy.n :]
        kept = {m.msg_id for m in keep}
        return [m for m in messages if m.msg_id in kept]
    if policy.mode is ScopeMode.TIME_WINDOW:
        assert policy.window is not None
        start, end = policy.window
        return [m for m in messages if start <= m.sent_at <= end]
    if policy.mode is ScopeMode.PARTICIPANTS:
        return [m for m in messages if m.sender in policy.included_senders]
    raise ValidationError(f"cannot apply mode {policy.mode} per conversation")


def apply_scope(
    policy: ScopePolicy,
    conversations: Sequence[tuple[Conversation, Sequence[Message]]],
    involved: frozenset[AccountId] | None = None,
) -> list[Message]:
    """Apply a scope policy over (conversation, ordered-messages) pairs.

    ``involved`` is the set of report parties; cross_conversation restricts
    to conversations all involved parties share, applies the inner policy
    per conversation, and merges the results by (sent_at, msg_id).
    """
    if policy.mode is ScopeMode.CROSS_CONVERSATION:
        assert policy.inner is not None
        involved = involved or frozenset()
        selected: list[Message] = []
        for conv, msgs in conversations:
            if involved <= conv.participants:
                selected.extend(_filter_one(policy.inner, msgs))
        return sorted(selected, key=message_sort_key)
    out: list[Message] = []
    for _conv, msgs in conversations:
        out.extend(_filter_one(policy, msgs))
    return out
