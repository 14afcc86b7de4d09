"""Shared domain types and the canonical byte serialization of messages.

The canonical serialization is the byte string every authenticity check is
computed over, so it must be injective and stable: length-prefixed fields in
a fixed order, prefixes 4-byte big-endian unsigned counts of the field bytes.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Callable, Iterable

from .errors import OversizeError, ValidationError

if TYPE_CHECKING:
    from .ephemeral import EphemeralWindow

# An AccountId is an opaque stable identifier: 1-64 visible ASCII chars.
AccountId = str

MAX_BODY_BYTES = 16 * 1024
MAX_ID_BYTES = 256


class Role(str, Enum):
    MEMBER = "member"
    COMMUNITY_MODERATOR = "community_moderator"
    SENIOR_MODERATOR = "senior_moderator"
    PLATFORM_MODERATOR = "platform_moderator"


MODERATOR_ROLES = frozenset(
    {Role.COMMUNITY_MODERATOR, Role.SENIOR_MODERATOR, Role.PLATFORM_MODERATOR}
)


class ConversationKind(str, Enum):
    PUBLIC_CHANNEL = "public_channel"
    PRIVATE_GROUP = "private_group"
    DIRECT = "direct"


def is_valid_account_id(value: str) -> bool:
    """1-64 chars, all visible ASCII (0x21-0x7E)."""
    return 1 <= len(value) <= 64 and all(0x21 <= ord(c) <= 0x7E for c in value)


@dataclass(frozen=True)
class UserProfile:
    account_id: AccountId
    display_name: str  # mutable in the store, deliberately non-unique
    avatar_ref: str
    join_date: int  # epoch ms
    roles: frozenset[Role]

    def is_moderator(self) -> bool:
        return bool(self.roles & MODERATOR_ROLES)


@dataclass(frozen=True)
class Message:
    msg_id: str
    conversation_id: str
    sender: AccountId
    sent_at: int  # epoch ms, platform clock
    body: str
    frank_tag: bytes = b""
    deleted: bool = False
    edited: bool = False


@dataclass(frozen=True)
class Conversation:
    conv_id: str
    kind: ConversationKind
    participants: frozenset[AccountId]
    ephemeral_policy: "EphemeralWindow | None" = None


def _field_bytes(name: str, raw: bytes, limit: int) -> bytes:
    if len(raw) > limit:
        raise OversizeError(f"{name} exceeds {limit} bytes")
    return struct.pack(">I", len(raw)) + raw


def canonical_serialize(m: Message) -> bytes:
    """Deterministic byte serialization: msg_id, conversation_id, sender,
    sent_at (8-byte big-endian), body; each field length-prefixed."""
    if not m.msg_id or not m.conversation_id or not m.sender:
        raise ValidationError("message fields must be populated")
    if m.sent_at < 0:
        raise ValidationError("sent_at must be non-negative")
    out = b""
    out += _field_bytes("msg_id", m.msg_id.encode("utf-8"), MAX_ID_BYTES)
    out += _field_bytes("conversation_id", m.conversation_id.encode("utf-8"), MAX_ID_BYTES)
    out += _field_bytes("sender", m.sender.encode("utf-8"), MAX_ID_BYTES)
    out += _field_bytes("sent_at", struct.pack(">Q", m.sent_at), 8)
    out += _field_bytes("body", m.body.encode("utf-8"), MAX_BODY_BYTES)
    return out


def parse_canonical(data: bytes) -> Message:
    """Inverse of canonical_serialize; recovers the serialized fields.

    Unserialized fields (frank_tag, flags) come back at their defaults.
    """
    fields: list[bytes] = []
    pos = 0
    for _ in range(5):
        if pos + 4 > len(data):
            raise ValidationError("truncated canonical bytes")
        (n,) = struct.unpack(">I", data[pos : pos + 4])
        pos += 4
        if pos + n > len(data):
            raise ValidationError("truncated canonical bytes")
        fields.append(data[pos : pos + n])
        pos += n
    if pos != len(data):
        raise ValidationError("trailing bytes after canonical fields")
    if len(fields[3]) != 8:
        raise ValidationError("sent_at segment must be 8 bytes")
    return Message(
        msg_id=fields[0].decode("utf-8"),
        conversation_id=fields[1].decode("utf-8"),
        sender=fields[2].decode("utf-8"),
        sent_at=struct.unpack(">Q", fields[3])[0],
        body=fields[4].decode("utf-8"),
    )


@dataclass(frozen=True)
class Violation:
    object_ref: str
    invariant: str
    detail: str = ""


def validate_store(
    conversations: Iterable[Conversation],
    messages: Iterable[Message],
    profiles: Iterable[UserProfile],
    verify_tag: Callable[[Message], bool] | None = None,
) -> list[Violation]:
    """Check every type invariant; returns one Violation per breakage.

    ``verify_tag`` is the frank verifier (supplied by the caller so this
    module stays key-free); when None, tag checks are skipped.
    """
    violations: list[Violation] = []
    convs = {c.conv_id: c for c in conversations}
    msgs = list(messages)
    profs = list(profiles)

    seen_accounts: set[str] = set()
    for p in profs:
        if not is_valid_account_id(p.account_id):
            violations.append(Violation(p.account_id, "account_id_format"))
        if p.account_id in seen_accounts:
            violations.append(Violation(p.account_id, "account_id_unique"))
        seen_accounts.add(p.account_id)
        if not p.roles:
            violations.append(Violation(p.account_id, "roles_non_empty"))

    first_sent: dict[str, int] = {}
    for m in msgs:
        first_sent[m.sender] = min(first_sent.get(m.sender, m.sent_at), m.sent_at)
    for p in profs:
        if p.account_id in first_sent and p.join_date > first_sent[p.account_id]:
            violations.append(Violation(p.account_id, "join_date_before_messages"))

    for c in convs.values():
        if len(c.participants) < 2:
            violations.append(Violation(c.conv_id, "participants_at_least_two"))
        if c.kind is ConversationKind.DIRECT and len(c.participants) != 2:
            violations.append(Violation(c.conv_id, "direct_exactly_two"))

    seen_msg_ids: set[str] = set()
    for m in msgs:
        if m.msg_id in seen_msg_ids:
            violations.append(Violation(m.msg_id, "msg_id_unique"))
        seen_msg_ids.add(m.msg_id)
        if m.sent_at <= 0:
            violations.append(Violation(m.msg_id, "sent_at_positive"))
        conv = convs.get(m.conversation_id)
        if conv is None:
            violations.append(Violation(m.msg_id, "conversation_exists"))
        elif m.sender not in conv.participants:
            violations.append(Violation(m.msg_id, "sender_is_participant"))
        if verify_tag is not None and not verify_tag(m):
            violations.append(Violation(m.msg_id, "frank_tag_verifies"))

    return violations


def message_sort_key(m: Message) -> tuple[int, str]:
    """Canonical in-conversation ordering; msg_id breaks sent_at ties."""
    return (m.sent_at, m.msg_id)
