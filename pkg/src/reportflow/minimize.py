"""Per-message visibility minimization: the unit of evidence disclosure.

Each in-scope message is disclosed at one of six levels, from fully hidden
to fully revealed. Levels form a partial order (reveal_set grows along it);
``redacted`` and ``attributes`` sit between metadata and full but are not
comparable with each other, and ``answer`` output is not contained in the
full body, so it only dominates metadata.
"""

from __future__ import annotations

import re
import threading
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Protocol, Sequence

from .errors import UnknownQuestionError, ValidationError
from .model import Message

AUTO_LABEL = "[REDACTED]"
REDACTION_CATEGORIES = ("home address", "real name", "phone number", "other")


class Level(str, Enum):
    REMOVED = "removed"
    METADATA_ONLY = "metadata_only"
    ATTRIBUTES = "attributes"
    ANSWER = "answer"
    REDACTED = "redacted"
    FULL = "full"


# Reveal-order edges; comparability is reachability over these.
_LEVEL_EDGES: dict[Level, tuple[Level, ...]] = {
    Level.REMOVED: (Level.METADATA_ONLY,),
    Level.METADATA_ONLY: (Level.REDACTED, Level.ATTRIBUTES, Level.ANSWER),
    Level.REDACTED: (Level.FULL,),
    Level.ATTRIBUTES: (Level.FULL,),
    Level.ANSWER: (),
    Level.FULL: (),
}


def _reachable(a: Level) -> frozenset[Level]:
    seen: set[Level] = set()
    frontier = [a]
    while frontier:
        cur = frontier.pop()
        for nxt in _LEVEL_EDGES[cur]:
            if nxt not in seen:
                seen.add(nxt)
                frontier.append(nxt)
    return frozenset(seen)


_ABOVE: dict[Level, frozenset[Level]] = {lvl: _reachable(lvl) for lvl in Level}


def level_lt(a: Level, b: Level) -> bool:
    """True iff a reveals strictly less than b in the declared order."""
    return b in _ABOVE[a]


def comparable_level_pairs() -> list[tuple[Level, Level]]:
    """All ordered pairs (a, b) with a < b."""
    return [(a, b) for a in Level for b in _ABOVE[a]]


class SpanOrigin(str, Enum):
    AUTO_DETECTED = "auto_detected"
    MANUAL_SELECTED_AUTO_LABEL = "manual_selected_auto_label"
    MANUAL_REPLACEMENT = "manual_replacement"


@dataclass(frozen=True)
class RedactionSpan:
    start: int
    end: int  # exclusive
    replacement: str
    origin: SpanOrigin
    category: str | None = None  # manual_selected_auto_label only

    def __post_init__(self):
        if self.start < 0 or self.start >= self.end:
            raise ValidationError("span requires 0 <= start < end")
        if self.origin is SpanOrigin.AUTO_DETECTED and self.replacement != AUTO_LABEL:
            raise ValidationError(f"auto spans use the fixed label {AUTO_LABEL}")
        if self.origin is SpanOrigin.MANUAL_SELECTED_AUTO_LABEL:
            if self.category not in REDACTION_CATEGORIES:
                raise ValidationError(
                    f"category must be one of {', '.join(REDACTION_CATEGORIES)}"
                )
            if self.replacement != f"[REDACTED: {self.category}]":
                raise ValidationError("labeled spans use '[REDACTED: <category>]'")

    @staticmethod
    def auto(start: int, end: int) -> "RedactionSpan":
        return RedactionSpan(start, end, AUTO_LABEL, SpanOrigin.AUTO_DETECTED)

    @staticmethod
    def labeled(start: int, end: int, category: str) -> "RedactionSpan":
        return RedactionSpan(
            start, end, f"[REDACTED: {category}]",
            SpanOrigin.MANUAL_SELECTED_AUTO_LABEL, category,
        )

    @staticmethod
    def manual(start: int, end: int, replacement: str) -> "RedactionSpan":
        return RedactionSpan(start, end, replacement, SpanOrigin.MANUAL_REPLACEMENT)

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "start": self.start,
            "end": self.end,
            "replacement": self.replacement,
            "origin": self.origin.value,
        }
        if self.category is not None:
            out["category"] = self.category
        return out

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> "RedactionSpan":
        origin = SpanOrigin(obj["origin"])
        if origin is SpanOrigin.AUTO_DETECTED:
            return cls.auto(obj["start"], obj["end"])
        if origin is SpanOrigin.MANUAL_SELECTED_AUTO_LABEL:
            return cls.labeled(obj["start"], obj["end"], obj.get("category", ""))
        return cls.manual(obj["start"], obj["end"], obj.get("replacement", ""))


def validate_spans(spans: Sequence[RedactionSpan], body_len: int) -> None:
    ordered = sorted(spans, key=lambda s: s.start)
    prev_end = 0
    for s in ordered:
        if s.end > body_len:
            raise ValidationError(f"span [{s.start},{s.end}) out of bounds")
        if s.start < prev_end:
            raise ValidationError("spans overlap")
        prev_end = s.end


def apply_redactions(body: str, spans: Sequence[RedactionSpan]) -> str:
    """Replace each span left-to-right; non-span characters are untouched."""
    validate_spans(spans, len(body))
    out: list[str] = []
    pos = 0
    for s in sorted(spans, key=lambda s: s.start):
        out.append(body[pos : s.start])
        out.append(s.replacement)
        pos = s.end
    out.append(body[pos:])
    return "".join(out)


@dataclass(frozen=True)
class VisibilityLevel:
    """A level choice plus its parameters, as picked by the reporter."""

    level: Level
    spans: tuple[RedactionSpan, ...] = ()
    attribute_names: tuple[str, ...] = ()
    question_id: str | None = None

    def __post_init__(self):
        if self.level is not Level.REDACTED and self.spans:
            raise ValidationError("spans only apply to the redacted level")
        if self.level is Level.ATTRIBUTES:
            unknown = set(self.attribute_names) - set(ATTRIBUTE_NAMES)
            if unknown:
                raise ValidationError(f"unknown attributes: {sorted(unknown)}")
        if self.level is Level.ANSWER and not self.question_id:
            raise ValidationError("answer level requires a question id")

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {"level": self.level.value}
        if self.spans:
            out["spans"] = [s.to_json() for s in self.spans]
        if self.attribute_names:
            out["attributes"] = list(self.attribute_names)
        if self.question_id:
            out["question"] = self.question_id
        return out

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> "VisibilityLevel":
        try:
            level = Level(obj["level"])
        except (KeyError, ValueError) as exc:
            raise ValidationError(f"unknown level: {obj.get('level')!r}") from exc
        return cls(
            level=level,
            spans=tuple(RedactionSpan.from_json(s) for s in obj.get("spans", [])),
            attribute_names=tuple(obj.get("attributes", [])),
            question_id=obj.get("question"),
        )


ATTRIBUTE_NAMES = (
    "length_chars",
    "contains_link",
    "contains_image_ref",
    "keyword_hits",
    "sentiment",
)

_LINK_RE = re.compile(r"https?://|\bwww\.", re.IGNORECASE)
_IMAGE_RE = re.compile(r"\.(?:png|jpe?g|gif|webp)\b|attachment://", re.IGNORECASE)

DEFAULT_DETECTORS: dict[str, str] = {
    "street_address": (
        r"\b\d{1,5}\s+(?:[A-Z][A-Za-z]*\s+){0,2}"
        r"(?:St|Street|Ave|Avenue|Rd|Road|Blvd|Boulevard|Ln|Lane|Dr|Drive|Ct|Court|Way)\b"
    ),
    "phone_number": r"\b(?:\(\d{3}\)[ .-]?|\d{3}[ .-])?\d{3}[ .-]\d{4}\b",
    "email": r"\b[\w.+-]+@[\w-]+\.[\w.-]+\b",
}

DEFAULT_KEYWORDS = ("idiot", "stupid", "hate", "kill", "address", "loser")
DEFAULT_NEGATIVE_WORDS = ("idiot", "stupid", "hate", "awful", "loser", "trash", "ugly")
DEFAULT_POSITIVE_WORDS = ("thanks", "great", "love", "nice", "good", "sorry")


class Answerer(Protocol):
    """Pluggable question answerer for the open-question visibility level."""

    concurrent_safe: bool

    def known_questions(self) -> frozenset[str]: ...

    def answer(self, question_id: str, messages: Sequence[Message]) -> str: ...


class StubAnswerer:
    """Deterministic, content-free default answerer.

    Its output never contains any substring of the message bodies, so the
    answer level cannot leak content while the stub is active.
    """

    concurrent_safe = True

    DEFAULT_QUESTIONS = frozenset({"who-initiated", "harassment-duration"})

    def __init__(self, questions: Iterable[str] | None = None):
        self._questions = frozenset(questions) if questions is not None else self.DEFAULT_QUESTIONS

    def known_questions(self) -> frozenset[str]:
        return self._questions

    def answer(self, question_id: str, messages: Sequence[Message]) -> str:
        if question_id not in self._questions:
            raise UnknownQuestionError(f"unknown question id: {question_id}")
        return f"STUB-ANSWER({question_id})"


@dataclass
class MinimizerConfig:
    keywords: tuple[str, ...] = DEFAULT_KEYWORDS
    negative_words: tuple[str, ...] = DEFAULT_NEGATIVE_WORDS
    positive_words: tuple[str, ...] = DEFAULT_POSITIVE_WORDS
    detectors: dict[str, str] = field(default_factory=lambda: dict(DEFAULT_DETECTORS))
    answerer: Answerer = field(default_factory=StubAnswerer)
    _answer_lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def ask(self, question_id: str, messages: Sequence[Message]) -> str:
        if self.answerer.concurrent_safe:
            return self.answerer.answer(question_id, messages)
        with self._answer_lock:
            return self.answerer.answer(question_id, messages)


def _word_hits(body: str, words: Sequence[str]) -> list[str]:
    lowered = body.lower()
    hits = []
    for w in words:
        if re.search(rf"\b{re.escape(w.lower())}\b", lowered):
            hits.append(w)
    return hits


@dataclass(frozen=True)
class AttributeSet:
    length_chars: int
    contains_link: bool
    contains_image_ref: bool
    keyword_hits: tuple[str, ...]
    sentiment: str  # negative | neutral | positive

    def as_dict(self) -> dict[str, Any]:
        return {
            "length_chars": self.length_chars,
            "contains_link": self.contains_link,
            "contains_image_ref": self.contains_image_ref,
            "keyword_hits": list(self.keyword_hits),
            "sentiment": self.sentiment,
        }


def compute_attributes(body: str, config: MinimizerConfig) -> AttributeSet:
    """Deterministic attribute synthesis from one message body."""
    pos = len(_word_hits(body, config.positive_words))
    neg = len(_word_hits(body, config.negative_words))
    score = pos - neg
    sentiment = "positive" if score >= 1 else "negative" if score <= -1 else "neutral"
    return AttributeSet(
        length_chars=len(body),
        contains_link=bool(_LINK_RE.search(body)),
        contains_image_ref=bool(_IMAGE_RE.search(body)),
        keyword_hits=tuple(_word_hits(body, config.keywords)),
        sentiment=sentiment,
    )


@dataclass(frozen=True)
class MinimizedView:
    """One message's disclosed view. The source body and spans stay on the
    object for level upgrades and reveal accounting; rendering only ever
    emits the disclosed projection (see render_view)."""

    msg_ref: str
    level: Level
    sender: str
    sent_at: int
    source_body: str
    spans: tuple[RedactionSpan, ...] = ()
    attributes: tuple[tuple[str, Any], ...] = ()  # requested name -> value
    question_id: str | None = None
    answer_text: str | None = None


def minimize(
    m: Message, vis: VisibilityLevel, config: MinimizerConfig
) -> MinimizedView | None:
    """Produce the disclosed view of ``m`` at the chosen level.

    Returns None for removed: a removed message yields no view object at
    all, so downstream bundles carry no trace of it.
    """
    if vis.level is Level.REMOVED:
        return None
    base = dict(
        msg_ref=m.msg_id, sender=m.sender, sent_at=m.sent_at, source_body=m.body
    )
    if vis.level is Level.METADATA_ONLY:
        return MinimizedView(level=Level.METADATA_ONLY, **base)
    if vis.level is Level.ATTRIBUTES:
        names = vis.attribute_names or ATTRIBUTE_NAMES
        attrs = compute_attributes(m.body, config).as_dict()
        picked = tuple((n, _freeze(attrs[n])) for n in ATTRIBUTE_NAMES if n in names)
        return MinimizedView(level=Level.ATTRIBUTES, attributes=picked, **base)
    if vis.level is Level.ANSWER:
        assert vis.question_id is not None
        text = config.ask(vis.question_id, [m])
        return MinimizedView(
            level=Level.ANSWER, question_id=vis.question_id, answer_text=text, **base
        )
    if vis.level is Level.REDACTED:
        validate_spans(vis.spans, len(m.body))
        return MinimizedView(level=Level.REDACTED, spans=vis.spans, **base)
    if vis.level is Level.FULL:
        return MinimizedView(level=Level.FULL, **base)
    raise ValidationError(f"unhandled level {vis.level}")


def _freeze(value: Any) -> Any:
    return tuple(value) if isinstance(value, list) else value


def auto_redact(m: Message, detectors: dict[str, str]) -> list[RedactionSpan]:
    """Run the configured detector patterns; returns non-overlapping spans
    in offset order, earliest-then-longest match winning on overlap."""
    matches: list[tuple[int, int, str]] = []
    for name in sorted(detectors):
        for hit in re.finditer(detectors[name], m.body):
            if hit.start() < hit.end():
                matches.append((hit.start(), hit.end(), name))
    matches.sort(key=lambda t: (t[0], -t[1], t[2]))
    spans: list[RedactionSpan] = []
    cursor = 0
    for start, end, _name in matches:
        if start >= cursor:
            spans.append(RedactionSpan.auto(start, end))
            cursor = end
    return spans


def answer_question(
    messages: Sequence[Message], question_id: str, config: MinimizerConfig
) -> str:
    """Route a targeted question about a message set to the answerer."""
    return config.ask(question_id, list(messages))


def rendered_body(view: MinimizedView) -> str | None:
    """The body text the view discloses, or None when it discloses none."""
    if view.level is Level.FULL:
        return view.source_body
    if view.level is Level.REDACTED:
        return apply_redactions(view.source_body, view.spans)
    return None


def render_view(
    view: MinimizedView,
    sender_label: str | None = None,
    sender_role: str | None = None,
) -> dict[str, Any]:
    """Project a view to its disclosed JSON form.

    ``sender_label`` substitutes a pseudonym for the raw account id; the
    raw id is emitted only when no label is given. Redaction entries keep
    their origin so reviewers can see how each redaction was produced, but
    never their source offsets or content.
    """
    out: dict[str, Any] = {
        "kind": "message",
        "msg_ref": view.msg_ref,
        "level": view.level.value,
        "sender": sender_label if sender_label is not None else view.sender,
        "sent_at": view.sent_at,
    }
    if sender_role is not None:
        out["sender_role"] = sender_role
    if view.level is Level.ATTRIBUTES:
        out["attributes"] = {n: _thaw(v) for n, v in view.attributes}
    elif view.level is Level.ANSWER:
        out["answer"] = {"question": view.question_id, "text": view.answer_text}
    elif view.level in (Level.REDACTED, Level.FULL):
        out["body"] = rendered_body(view)
        if view.level is Level.REDACTED:
            out["redactions"] = [
                {"replacement": s.replacement, "origin": s.origin.value}
                | ({"category": s.category} if s.category else {})
                for s in sorted(view.spans, key=lambda s: s.start)
            ]
    return out


def _thaw(value: Any) -> Any:
    return list(value) if isinstance(value, tuple) else value


Fact = tuple
REVEAL_DEFAULT_CONFIG = MinimizerConfig()


def reveal_set(
    view: MinimizedView | None, config: MinimizerConfig = REVEAL_DEFAULT_CONFIG
) -> set[Fact]:
    """Atomic facts the view disclosed: metadata, unredacted character
    positions, attribute name/value pairs, answer text.

    A full view implicitly discloses every attribute derivable from the
    body, so attribute facts for full are computed over all names.
    """
    if view is None:
        return set()
    facts: set[Fact] = {("sender", view.sender), ("sent_at", view.sent_at)}
    if view.level is Level.METADATA_ONLY:
        return facts
    if view.level is Level.ATTRIBUTES:
        facts.update(("attr", n, v) for n, v in view.attributes)
        return facts
    if view.level is Level.ANSWER:
        facts.add(("answer", view.question_id, view.answer_text))
        return facts
    if view.level is Level.REDACTED:
        redacted = set()
        for s in view.spans:
            redacted.update(range(s.start, s.end))
        facts.update(
            ("char", i, c)
            for i, c in enumerate(view.source_body)
            if i not in redacted
        )
        return facts
    # full: all characters plus every derivable attribute
    facts.update(("char", i, c) for i, c in enumerate(view.source_body))
    attrs = compute_attributes(view.source_body, config).as_dict()
    facts.update(("attr", n, _freeze(v)) for n, v in attrs.items())
    return facts
