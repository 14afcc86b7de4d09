"""Sliding-window buffer for ephemeral segments.

Segments stay reportable only while inside the conversation's window
(age <= n seconds, boundary inclusive, or the n most recent). Reads are
pure predicate evaluations over an explicit ``now``; physical purging —
payload dropped, tombstone kept — happens on mutating calls so every purge
decision is replayable. The buffer holds no clock of its own.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Any

from .errors import ValidationError
from .model import AccountId


class ClockError(ValidationError):
    code = "clock"


@dataclass(frozen=True)
class EphemeralWindow:
    mode: str  # "seconds" | "messages"
    n: int

    def __post_init__(self):
        if self.mode not in ("seconds", "messages"):
            raise ValidationError(f"unknown window mode {self.mode!r}")
        if self.n < 1:
            raise ValidationError("window n must be >= 1")

    def to_json(self) -> dict[str, Any]:
        return {"mode": self.mode, "n": self.n}

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> "EphemeralWindow":
        return cls(mode=obj.get("mode", ""), n=int(obj.get("n", 0)))


@dataclass(frozen=True)
class EphemeralSegment:
    seg_id: str
    conversation_id: str
    speaker: AccountId
    captured_at: int  # epoch ms
    payload: bytes
    frank_tag: bytes = b""


@dataclass(frozen=True)
class PurgeTombstone:
    """What remains after a purge: the id and when, never content or speaker."""

    seg_id: str
    purged_at: int


def _recency_key(s: EphemeralSegment) -> tuple[int, str]:
    return (s.captured_at, s.seg_id)


class EphemeralBuffer:
    """Per-conversation segment buffer; appends are serialized by the caller."""

    def __init__(self, conversation_id: str, window: EphemeralWindow):
        self.conversation_id = conversation_id
        self.window = window
        self._live: list[EphemeralSegment] = []  # kept in capture order
        self._tombstones: dict[str, PurgeTombstone] = {}

    def _inside(self, seg: EphemeralSegment, now: int, rank_from_newest: int) -> bool:
        if self.window.mode == "seconds":
            return now - seg.captured_at <= self.window.n * 1000
        return rank_from_newest < self.window.n

    def _survivors(self, now: int) -> list[EphemeralSegment]:
        ordered = sorted(self._live, key=_recency_key)
        total = len(ordered)
        return [
            seg
            for i, seg in enumerate(ordered)
            if self._inside(seg, now, total - 1 - i)
        ]

    def append(self, segment: EphemeralSegment, now: int) -> list[PurgeTombstone]:
        """Store a segment, then physically purge whatever fell outside the
        window. Returns the tombstones created by this call."""
        if segment.captured_at > now:
            raise ClockError("segment captured_at is in the future")
        if segment.conversation_id != self.conversation_id:
            raise ValidationError("segment belongs to a different conversation")
        if segment.seg_id in self._tombstones or any(
            s.seg_id == segment.seg_id for s in self._live
        ):
            raise ValidationError(f"duplicate seg_id {segment.seg_id}")
        self._live.append(segment)
        self._live.sort(key=_recency_key)
        return self.purge_expired(now)

    def purge_expired(self, now: int) -> list[PurgeTombstone]:
        """Drop payloads outside the window; only tombstones remain."""
        keep = {s.seg_id for s in self._survivors(now)}
        new_stones: list[PurgeTombstone] = []
        for seg in self._live:
            if seg.seg_id not in keep:
                stone = PurgeTombstone(seg_id=seg.seg_id, purged_at=now)
                self._tombstones[seg.seg_id] = stone
                new_stones.append(stone)
        self._live = [s for s in self._live if s.seg_id in keep]
        return new_stones

    def reportable(self, now: int) -> list[EphemeralSegment]:
        """Segments whose payloads survive the window predicate at ``now``,
        in capture order. Pure: never mutates the buffer."""
        return self._survivors(now)

    def is_reportable(self, seg_id: str, now: int) -> bool:
        return any(s.seg_id == seg_id for s in self._survivors(now))

    def get_reportable(self, seg_id: str, now: int) -> EphemeralSegment | None:
        for s in self._survivors(now):
            if s.seg_id == seg_id:
                return s
        return None

    @property
    def tombstones(self) -> list[PurgeTombstone]:
        return sorted(self._tombstones.values(), key=lambda t: t.seg_id)

    def was_purged(self, seg_id: str) -> bool:
        return seg_id in self._tombstones
