"""Hash-chained, append-only audit log.

Every state-changing operation appends exactly one event. Each event hashes
its own fields plus the previous event's hash, so any mutation, deletion, or
reordering breaks verification from that sequence number on.
"""

from __future__ import annotations

import base64
import hashlib
import json
from dataclasses import dataclass
from typing import Any, Iterable, Sequence

GENESIS_PREV_HASH = b"\x00" * 32


def _canonical(obj: Any) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode(
        "utf-8"
    )


def compute_event_hash(
    seq: int, actor: str, action: str, obj: Any, at: int, prev_hash: bytes
) -> bytes:
    material = _canonical(
        {
            "seq": seq,
            "actor": actor,
            "action": action,
            "object": obj,
            "at": at,
            "prev_hash": base64.b64encode(prev_hash).decode("ascii"),
        }
    )
    return hashlib.sha256(material).digest()


@dataclass(frozen=True)
class AuditEvent:
    seq: int
    actor: str
    action: str
    obj: Any  # JSON-serializable object reference / details
    at: int
    prev_hash: bytes
    hash: bytes

    def to_json(self) -> dict[str, Any]:
        return {
            "seq": self.seq,
            "actor": self.actor,
            "action": self.action,
            "object": self.obj,
            "at": self.at,
            "prev_hash": base64.b64encode(self.prev_hash).decode("ascii"),
            "hash": base64.b64encode(self.hash).decode("ascii"),
        }

    @classmethod
    def from_json(cls, o: dict[str, Any]) -> "AuditEvent":
        return cls(
            seq=int(o["seq"]),
            actor=o["actor"],
            action=o["action"],
            obj=o["object"],
            at=int(o["at"]),
            prev_hash=base64.b64decode(o["prev_hash"]),
            hash=base64.b64decode(o["hash"]),
        )


class AuditLog:
    def __init__(self) -> None:
        self._events: list[AuditEvent] = []

    def append(self, actor: str, action: str, obj: Any, at: int) -> AuditEvent:
        seq = len(self._events) + 1
        prev = self._events[-1].hash if self._events else GENESIS_PREV_HASH
        ev = AuditEvent(
            seq=seq,
            actor=actor,
            action=action,
            obj=obj,
            at=at,
            prev_hash=prev,
            hash=compute_event_hash(seq, actor, action, obj, at, prev),
        )
        self._events.append(ev)
        return ev

    @property
    def events(self) -> list[AuditEvent]:
        return list(self._events)

    def __len__(self) -> int:
        return len(self._events)

    @property
    def head_hash(self) -> bytes:
        return self._events[-1].hash if self._events else GENESIS_PREV_HASH

    def events_for_report(self, report_id: str) -> list[AuditEvent]:
        return [
            e
            for e in self._events
            if isinstance(e.obj, dict) and e.obj.get("report_id") == report_id
        ]

    def export_ndjson(self) -> str:
        """One event per line; hash fields base64."""
        return "\n".join(
            json.dumps(e.to_json(), sort_keys=True, separators=(",", ":"))
            for e in self._events
        )


def verify_audit_chain(events: Sequence[AuditEvent]) -> tuple[bool, int | None]:
    """Recompute the chain; returns (ok, seq of the first failing event).

    Fails on recomputed-hash mismatch, broken prev linkage, or a seq gap
    (seq must be gapless from 1).
    """
    prev = GENESIS_PREV_HASH
    expected_seq = 1
    for ev in events:
        if (
            ev.seq != expected_seq
            or ev.prev_hash != prev
            or compute_event_hash(ev.seq, ev.actor, ev.action, ev.obj, ev.at, ev.prev_hash)
            != ev.hash
        ):
            return False, ev.seq
        prev = ev.hash
        expected_seq += 1
    return True, None


def parse_ndjson(text: str) -> list[AuditEvent]:
    return [AuditEvent.from_json(json.loads(line)) for line in text.splitlines() if line.strip()]
