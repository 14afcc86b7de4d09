"""Orchestrating engine: reports, grants, buffers, audit, persistence.

Every state-changing operation flows through ``execute()``: it resolves the
clock, appends the command to the write-ahead log, then applies it under
one lock. Applies are deterministic functions of (state, params, now) —
ids come from counters, MACs from the key store file — so replaying the
WAL after a crash reproduces byte-identical state and audit chain.

Audit actors are always privacy-safe labels: report-scoped pseudonyms for
parties, stable hashed handles for moderators, "platform" for the system.
"""

from __future__ import annotations

import base64
import json
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from . import fixtures
from .access import (
    AccessGrant,
    IdentifierPolicy,
    ModeratorTag,
    PseudonymMap,
    account_ref,
    identity_visible,
    moderator_handle,
)
from .audit import AuditLog, verify_audit_chain
from .config import ServiceConfig
from .disclosure import (
    BystanderFinding,
    BystanderInvite,
    ConsentState,
    Criticality,
    DEFAULT_CONSEQUENCES,
    DisclosureRequest,
    Involvement,
    RequestState,
    validate_finding_shape,
)
from .ephemeral import EphemeralBuffer, EphemeralSegment, EphemeralWindow
from .errors import (
    AuthorizationError,
    BlockedError,
    EmptyScopeError,
    GrantDeniedError,
    InvalidTargetError,
    MacInvalidError,
    NotFoundError,
    ReportingError,
    StateError,
    ValidationError,
    WindowExpiredError,
)
from .franking import (
    AttestationToken,
    KeyStore,
    attest_bundle,
    detect_impersonation,
    frank,
    frank_bytes,
    verify_forwarded,
    verify_frank,
)
from .lifecycle import (
    AssignmentRequest,
    Decision,
    Granularity,
    ModeratorProfile,
    Outcome,
    Punishment,
    PunishmentTiming,
    ReportState,
    TERMINAL_STATES,
    next_state,
    select_moderators,
    transition_table_json,
)
from .minimize import (
    Level,
    VisibilityLevel,
    level_lt,
    minimize,
    render_view,
    rendered_body,
)
from .model import (
    Conversation,
    ConversationKind,
    Message,
    UserProfile,
    canonical_serialize,
    message_sort_key,
    validate_store,
)
from .scope import ScopePolicy, apply_scope

EXPORT_FORMAT = "reportflow-bundle/v1"
RATE_WINDOW_MS = 60_000


@dataclass
class MediaItem:
    media_id: str
    description: str
    payload_b64: str
    claimed_sender: str | None
    added_at: int
    provenance: str = "unattested"


@dataclass
class TestimonyItem:
    invite_id: str
    msg_ref: str
    description: str
    by_label: str
    provenance: str = "unattested"
    kind: str = "testimonial"


@dataclass
class PunishmentRecord:
    report_id: str
    account: str
    kind: Punishment
    applied_at: int


class Report:
    def __init__(
        self,
        report_id: str,
        reporter: str,
        reported: str,
        reason: str,
        created_at: int,
        scope_policy: ScopePolicy,
        identifier_policy: IdentifierPolicy,
    ):
        self.report_id = report_id
        self.reporter = reporter
        self.reported = reported
        self.reason = reason
        self.created_at = created_at
        self.state = ReportState.FILED
        self.scope_policy = scope_policy
        self.identifier_policy = identifier_policy
        self.pseudonymous = identifier_policy is not IdentifierPolicy.IMMEDIATE
        self.conversation_ids: list[str] = []
        self.scoped_msg_ids: list[str] = []
        self.view_levels: dict[str, VisibilityLevel] = {}
        self.pseudonyms = PseudonymMap(reporter, reported)
        self.pinned_segments: list[EphemeralSegment] = []
        self.media: list[MediaItem] = []
        self.testimony: list[TestimonyItem] = []
        self.requests: dict[str, DisclosureRequest] = {}
        self.invites: dict[str, BystanderInvite] = {}
        self.findings: list[BystanderFinding] = []
        self.credibility_notes: list[dict] = []
        self.flags: set[str] = set()
        self.assigned: list[str] = []
        self.decision: Decision | None = None
        self.decided_at: int | None = None
        self.notified_at: int | None = None
        self.notices: list[dict] = []
        self.appeal: dict | None = None
        self.pending_punishment: Punishment | None = None
        self.impersonation: list[dict] = []
        self.grant_ids: list[str] = []
        self.terminated_reason: str | None = None
        self.token: AttestationToken | None = None

    def transition(self, operation: str) -> None:
        self.state = next_state(self.state, operation)

    def is_assigned(self, account: str) -> bool:
        return account in self.assigned


class WriteAheadLog:
    """Append-only NDJSON command log; fsynced per record."""

    def __init__(self, path: Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "a", encoding="utf-8")

    def append(self, record: dict) -> None:
        self._fh.write(json.dumps(record, sort_keys=True, separators=(",", ":")) + "\n")
        self._fh.flush()
        os.fsync(self._fh.fileno())

    @staticmethod
    def read_records(path: Path) -> list[dict]:
        if not Path(path).exists():
            return []
        records = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                try:
                    records.append(json.loads(line))
                except json.JSONDecodeError:
                    break  # torn tail from a crash mid-append
        return records

    def close(self) -> None:
        self._fh.close()


class Engine:
    def __init__(
        self,
        config: ServiceConfig | None = None,
        keys: KeyStore | None = None,
        wal_path: str | Path | None = None,
    ):
        self.config = config or ServiceConfig()
        self.keys = keys or KeyStore.generate()
        self.minimizer = self.config.minimizer()
        self._lock = threading.RLock()
        self._now_floor = 0

        self.profiles: dict[str, UserProfile] = {}
        self.conversations: dict[str, Conversation] = {}
        self.messages: dict[str, list[Message]] = {}
        self.messages_by_id: dict[str, Message] = {}
        self.buffers: dict[str, EphemeralBuffer] = {}
        self.reports: dict[str, Report] = {}
        self.grants: dict[str, AccessGrant] = {}
        self.tags: list[ModeratorTag] = []
        self.audit = AuditLog()
        self.punishments: list[PunishmentRecord] = []
        self.notifications: dict[str, list[dict]] = {}
        self.imports: list[dict] = []
        self.rate_flagged: set[str] = set()
        self._filings: dict[str, list[int]] = {}
        self._reviewed: dict[str, int] = {}
        self._counters: dict[str, int] = {}

        self._wal: WriteAheadLog | None = None
        if wal_path is not None:
            for rec in WriteAheadLog.read_records(Path(wal_path)):
                try:
                    self._apply(rec["op"], rec["params"], rec["now"])
                except ReportingError:
                    pass  # the original call failed identically
            self._wal = WriteAheadLog(Path(wal_path))

    # ── clock and id plumbing ──

    def _resolve_now(self, now: int | None) -> int:
        if now is None:
            now = self._now_floor if self.config.harness_mode else int(time.time() * 1000)
        now = max(now, self._now_floor)
        self._now_floor = now
        return now

    def _next_id(self, kind: str, prefix: str) -> str:
        self._counters[kind] = self._counters.get(kind, 0) + 1
        return f"{prefix}{self._counters[kind]:04d}"

    # ── public entry points ──

    def execute(self, op: str, params: dict, now: int | None = None) -> Any:
        with self._lock:
            resolved = self._resolve_now(now)
            if self._wal is not None:
                self._wal.append({"op": op, "params": params, "now": resolved})
            return self._apply(op, params, resolved)

    def _apply(self, op: str, params: dict, now: int) -> Any:
        self._now_floor = max(self._now_floor, now)
        handler = getattr(self, f"_op_{op}", None)
        if handler is None:
            raise ValidationError(f"unknown operation {op!r}")
        return handler(params, now)

    # ── labels and audit helpers ──

    def _label(self, report: Report | None, account: str) -> str:
        """Audit-safe label: pseudonym inside the report, handle for
        moderators, opaque ref otherwise."""
        if account == "platform":
            return "platform"
        if report is not None:
            pseud = report.pseudonyms.get(account)
            if pseud is not None:
                return pseud.label
        prof = self.profiles.get(account)
        if prof is not None and prof.is_moderator():
            return moderator_handle(account)
        return account_ref(account)

    def _audit(self, actor: str, action: str, obj: dict, now: int) -> None:
        self.audit.append(actor, action, obj, now)

    def _deny(
        self, report: Report | None, account: str, action: str, now: int, detail: str
    ) -> None:
        obj: dict[str, Any] = {"action": action}
        if report is not None:
            obj["report_id"] = report.report_id
        self._audit(self._label(report, account), "authz_denied", obj, now)
        err = AuthorizationError(detail)
        err.audited = True  # the attempt is already in the chain
        raise err

    def _require_profile(self, account: str) -> UserProfile:
        prof = self.profiles.get(account)
        if prof is None:
            raise NotFoundError(f"unknown account {account}")
        return prof

    def _require_moderator(self, account: str) -> UserProfile:
        prof = self._require_profile(account)
        if not prof.is_moderator():
            raise AuthorizationError(f"{account_ref(account)} holds no moderator role")
        return prof

    def _require_report(self, report_id: str) -> Report:
        report = self.reports.get(report_id)
        if report is None:
            raise NotFoundError(f"unknown report {report_id}")
        return report

    # ── rendering and attestation ──

    def _scoped_messages(self, report: Report) -> list[Message]:
        return [self.messages_by_id[mid] for mid in report.scoped_msg_ids]

    def _sender_labels(self, report: Report, account: str) -> tuple[str | None, str | None]:
        """(sender_label, sender_role) for bundle rendering."""
        if not report.pseudonymous:
            return None, None  # raw account id is rendered
        pseud = report.pseudonyms.ensure(account)
        return pseud.label, pseud.role

    def _render_bundle(self, report: Report) -> list[dict]:
        rendered: list[dict] = []
        for m in self._scoped_messages(report):
            vis = report.view_levels.get(m.msg_id)
            if vis is None:
                continue
            view = minimize(m, vis, self.minimizer)
            if view is None:
                continue  # removed: no trace in the bundle
            label, role = self._sender_labels(report, m.sender)
            rendered.append(render_view(view, label, role))
        for seg in report.pinned_segments:
            label, role = self._sender_labels(report, seg.speaker)
            item: dict[str, Any] = {
                "kind": "segment",
                "seg_id": seg.seg_id,
                "speaker": label if label is not None else seg.speaker,
                "captured_at": seg.captured_at,
                "payload": base64.b64encode(seg.payload).decode("ascii"),
            }
            if role is not None:
                item["sender_role"] = role
            rendered.append(item)
        return rendered

    def _attest(self, report: Report, now: int) -> list[dict]:
        """Render and re-attest the bundle; refuses if any source fails
        frank verification. Returns the rendered views."""
        rendered = self._render_bundle(report)
        sources: list[tuple[str, bytes, bytes]] = []
        for m in self._scoped_messages(report):
            vis = report.view_levels.get(m.msg_id)
            if vis is None or vis.level is Level.REMOVED:
                continue
            sources.append((m.msg_id, canonical_serialize(m), m.frank_tag))
        for seg in report.pinned_segments:
            sources.append((seg.seg_id, seg.payload, seg.frank_tag))
        report.token = attest_bundle(
            rendered, report.report_id, self.keys.active, now, sources
        )
        return rendered

    def _annex_json(self, report: Report) -> dict:
        return {
            "media": [
                {
                    "media_id": mi.media_id,
                    "description": mi.description,
                    "payload": mi.payload_b64,
                    "claimed_sender": mi.claimed_sender,
                    "provenance": mi.provenance,
                }
                for mi in report.media
            ],
            "testimony": [
                {
                    "invite_id": t.invite_id,
                    "msg_ref": t.msg_ref,
                    "description": t.description,
                    "by": t.by_label,
                    "provenance": t.provenance,
                    "kind": t.kind,
                }
                for t in report.testimony
            ],
        }

    def _evidence_json(self, report: Report) -> dict:
        rendered = self._render_bundle(report)
        token_json = report.token.to_json() if report.token else None
        verification = None
        if report.token is not None:
            verification = verify_forwarded(rendered, report.token, self.keys).to_json()
        return {
            "report_id": report.report_id,
            "pseudonymous": report.pseudonymous,
            "views": rendered,
            "token": token_json,
            "verification": verification,
            "annex": self._annex_json(report),
        }

    # ── seeding ──

    def _op_seed_fixtures(self, params: dict, now: int) -> dict:
        if self.profiles:
            raise StateError("store already seeded")
        key = self.keys.active
        for p in fixtures.fixture_profiles():
            self.profiles[p.account_id] = p
        for c in fixtures.fixture_conversations():
            self.conversations[c.conv_id] = c
            self.messages[c.conv_id] = []
            if c.ephemeral_policy is not None:
                self.buffers[c.conv_id] = EphemeralBuffer(c.conv_id, c.ephemeral_policy)
        for m in fixtures.fixture_messages():
            tagged = Message(
                msg_id=m.msg_id,
                conversation_id=m.conversation_id,
                sender=m.sender,
                sent_at=m.sent_at,
                body=m.body,
                frank_tag=frank(m, key),
            )
            self.messages[tagged.conversation_id].append(tagged)
            self.messages_by_id[tagged.msg_id] = tagged
        for conv_msgs in self.messages.values():
            conv_msgs.sort(key=message_sort_key)
        violations = validate_store(
            self.conversations.values(),
            self.messages_by_id.values(),
            self.profiles.values(),
            verify_tag=lambda m: verify_frank(m, key),
        )
        if violations:
            raise ValidationError(f"fixture store invalid: {violations[0]}")
        self._audit(
            "platform",
            "fixtures_seeded",
            {
                "profiles": len(self.profiles),
                "conversations": len(self.conversations),
                "messages": len(self.messages_by_id),
            },
            now,
        )
        return {"seeded": True}

    # ── ephemeral buffer ──

    def _op_append_segment(self, params: dict, now: int) -> dict:
        conv = self.conversations.get(params["conv_id"])
        if conv is None:
            raise NotFoundError(f"unknown conversation {params['conv_id']}")
        buffer = self.buffers.get(conv.conv_id)
        if buffer is None:
            raise ValidationError(f"conversation {conv.conv_id} is not ephemeral")
        speaker = params["actor"]
        if speaker not in conv.participants:
            self._deny(None, speaker, "append_segment", now, "speaker not a participant")
        payload = base64.b64decode(params["payload_b64"])
        seg = EphemeralSegment(
            seg_id=params.get("seg_id") or self._next_id("segment", "seg"),
            conversation_id=conv.conv_id,
            speaker=speaker,
            captured_at=int(params.get("captured_at", now)),
            payload=payload,
            frank_tag=frank_bytes(payload, self.keys.active),
        )
        tombstones = buffer.append(seg, now)
        self._audit(
            "platform",
            "segment_appended",
            {
                "conversation_id": conv.conv_id,
                "seg_id": seg.seg_id,
                "purged": [t.seg_id for t in tombstones],
            },
            now,
        )
        return {"seg_id": seg.seg_id, "purged": [t.seg_id for t in tombstones]}

    def reportable_segments(self, conv_id: str, viewer: str, now: int | None = None) -> list[dict]:
        with self._lock:
            now = now if now is not None else self._now_floor
            conv = self.conversations.get(conv_id)
            if conv is None:
                raise NotFoundError(f"unknown conversation {conv_id}")
            if viewer not in conv.participants:
                raise AuthorizationError("only participants may list reportable segments")
            buffer = self.buffers.get(conv_id)
            if buffer is None:
                raise ValidationError(f"conversation {conv_id} is not ephemeral")
            return [
                {
                    "seg_id": s.seg_id,
                    "speaker": s.speaker,
                    "captured_at": s.captured_at,
                    "payload": base64.b64encode(s.payload).decode("ascii"),
                }
                for s in buffer.reportable(now)
            ]

    # ── filing and evidence assembly ──

    def _parse_scope(self, raw: Any) -> ScopePolicy:
        if isinstance(raw, dict) and "preset" in raw:
            preset = self.config.scope_presets.get(raw["preset"])
            if preset is None:
                raise ValidationError(f"unknown scope preset {raw['preset']!r}")
            return preset
        if isinstance(raw, dict):
            return ScopePolicy.from_json(raw)
        raise ValidationError("scope must be a policy object or {'preset': name}")

    def _target_conversations(
        self, reporter: str, reported: str, requested: list[str] | None
    ) -> list[Conversation]:
        if requested:
            convs = []
            for cid in requested:
                conv = self.conversations.get(cid)
                if conv is None:
                    raise NotFoundError(f"unknown conversation {cid}")
                convs.append(conv)
            return convs
        return [
            c
            for c in self.conversations.values()
            if reporter in c.participants and reported in c.participants
        ]

    def _apply_scope_to_report(
        self, report: Report, conversations: list[Conversation]
    ) -> None:
        pairs = [(c, self.messages.get(c.conv_id, [])) for c in conversations]
        scoped = apply_scope(
            report.scope_policy, pairs, frozenset({report.reporter, report.reported})
        )
        report.conversation_ids = sorted({m.conversation_id for m in scoped}) or [
            c.conv_id for c in conversations
        ]
        report.scoped_msg_ids = [m.msg_id for m in scoped]
        kept = {
            mid: vis for mid, vis in report.view_levels.items() if mid in set(report.scoped_msg_ids)
        }
        report.view_levels = {
            mid: kept.get(mid, VisibilityLevel(level=Level.FULL))
            for mid in report.scoped_msg_ids
        }
        for m in scoped:
            report.pseudonyms.ensure(m.sender)

    def _check_impersonation(self, report: Report) -> None:
        claimed = self.profiles.get(report.reported)
        if claimed is None:
            return
        findings = []
        for sender in dict.fromkeys(m.sender for m in self._scoped_messages(report)):
            if sender == report.reporter:
                continue
            verdict = detect_impersonation(claimed, sender)
            label, _ = self._sender_labels(report, sender)
            findings.append(
                {
                    "claimed": self._party_ref(report, report.reported),
                    "evidence_sender": label if label is not None else sender,
                    "verdict": verdict,
                }
            )
        report.impersonation = findings

    def _party_ref(self, report: Report, account: str) -> str:
        if report.pseudonymous:
            return report.pseudonyms.ensure(account).label
        return account

    def _merge_views(self, report: Report, raw_views: dict[str, Any]) -> None:
        scoped = set(report.scoped_msg_ids)
        parsed: dict[str, VisibilityLevel] = {}
        for msg_id, vis_json in raw_views.items():
            if msg_id not in scoped:
                raise InvalidTargetError(f"{msg_id} is not in the report's scope")
            vis = VisibilityLevel.from_json(vis_json)
            if vis.level is Level.REDACTED:
                body = self.messages_by_id[msg_id].body
                for span in vis.spans:
                    if span.end > len(body):
                        raise ValidationError(
                            f"span [{span.start},{span.end}) out of bounds for {msg_id}"
                        )
            if vis.level is Level.ANSWER:
                if vis.question_id not in self.minimizer.answerer.known_questions():
                    raise ValidationError(f"unknown question id: {vis.question_id}")
            parsed[msg_id] = vis
        report.view_levels.update(parsed)

    def _levels_json(self, report: Report) -> dict[str, str]:
        return {mid: vis.level.value for mid, vis in sorted(report.view_levels.items())}

    def _pin_segments(self, report: Report, seg_ids: list[str], now: int) -> None:
        expired = []
        picked = []
        for sid in seg_ids:
            seg = None
            for conv_id, buffer in self.buffers.items():
                found = buffer.get_reportable(sid, now)
                if found is not None:
                    seg = found
                    break
            if seg is None:
                expired.append(sid)
            else:
                picked.append(seg)
        if expired:
            raise WindowExpiredError(
                f"segments no longer reportable: {', '.join(sorted(expired))}"
            )
        for seg in picked:
            if any(p.seg_id == seg.seg_id for p in report.pinned_segments):
                continue
            report.pinned_segments.append(seg)
            report.pseudonyms.ensure(seg.speaker)
            if seg.conversation_id not in report.conversation_ids:
                report.conversation_ids.append(seg.conversation_id)

    def _op_file_report(self, params: dict, now: int) -> dict:
        reporter = params["reporter"]
        reported = params["reported"]
        self._require_profile(reporter)
        self._require_profile(reported)
        if reporter == reported:
            raise ValidationError("cannot report yourself")
        policy_raw = params.get("identifier_policy")
        identifier_policy = (
            IdentifierPolicy(policy_raw) if policy_raw else self.config.identifier_policy
        )
        scope_policy = self._parse_scope(params["scope"])
        conversations = self._target_conversations(
            reporter, reported, params.get("conversations")
        )
        if not any(reporter in c.participants for c in conversations):
            raise AuthorizationError("reporter is not a participant of any scoped conversation")

        report = Report(
            report_id=self._next_id("report", "r"),
            reporter=reporter,
            reported=reported,
            reason=params.get("reason", ""),
            created_at=now,
            scope_policy=scope_policy,
            identifier_policy=identifier_policy,
        )
        self._apply_scope_to_report(report, conversations)
        if params.get("views"):
            self._merge_views(report, params["views"])
        seg_ids = params.get("segments") or []
        if seg_ids:
            self._pin_segments(report, seg_ids, now)
        if not report.scoped_msg_ids and not report.pinned_segments:
            raise EmptyScopeError("scope selected no messages and no segments were attached")

        report.transition("assemble")  # filed -> assembling
        self._check_impersonation(report)
        self._attest(report, now)
        self.reports[report.report_id] = report
        self._audit(
            self._label(report, reporter),
            "report_filed",
            {
                "report_id": report.report_id,
                "reporter": report.pseudonyms.ensure(reporter).label,
                "reported": report.pseudonyms.ensure(reported).label,
                "scope": scope_policy.to_json(),
                "conversations": report.conversation_ids,
                "levels": self._levels_json(report),
                "segments": [s.seg_id for s in report.pinned_segments],
                "state": report.state.value,
            },
            now,
        )
        self._note_filing(reporter, now)
        return {"report_id": report.report_id, "state": report.state.value}

    def _note_filing(self, reporter: str, now: int) -> None:
        window = self._filings.setdefault(reporter, [])
        window.append(now)
        recent = [t for t in window if now - t <= RATE_WINDOW_MS]
        self._filings[reporter] = recent
        if len(recent) >= self.config.flood_threshold_per_minute and reporter not in self.rate_flagged:
            self.rate_flagged.add(reporter)
            self._audit(
                "platform",
                "rate_signal_raised",
                {
                    "account": account_ref(reporter),
                    "filings_in_window": len(recent),
                    "threshold": self.config.flood_threshold_per_minute,
                },
                now,
            )

    def _require_reporter(self, report: Report, actor: str, action: str, now: int) -> None:
        if actor != report.reporter:
            self._deny(report, actor, action, now, "only the reporter may do this")

    def _op_set_scope(self, params: dict, now: int) -> dict:
        report = self._require_report(params["report_id"])
        self._require_reporter(report, params["actor"], "set_scope", now)
        if report.state is not ReportState.ASSEMBLING:
            raise StateError("scope can only change while assembling")
        report.scope_policy = self._parse_scope(params["scope"])
        conversations = self._target_conversations(
            report.reporter, report.reported, params.get("conversations")
        )
        self._apply_scope_to_report(report, conversations)
        if not report.scoped_msg_ids and not report.pinned_segments:
            raise EmptyScopeError("scope selected no messages and no segments are attached")
        report.transition("add_evidence")
        self._check_impersonation(report)
        self._attest(report, now)
        self._audit(
            self._label(report, params["actor"]),
            "scope_set",
            {
                "report_id": report.report_id,
                "scope": report.scope_policy.to_json(),
                "levels": self._levels_json(report),
            },
            now,
        )
        return {"scoped": report.scoped_msg_ids}

    def _op_set_views(self, params: dict, now: int) -> dict:
        report = self._require_report(params["report_id"])
        self._require_reporter(report, params["actor"], "set_views", now)
        if report.state is not ReportState.ASSEMBLING:
            raise StateError("views can only be chosen while assembling")
        self._merge_views(report, params.get("views") or {})
        report.transition("add_evidence")
        self._attest(report, now)
        self._audit(
            self._label(report, params["actor"]),
            "views_set",
            {"report_id": report.report_id, "levels": self._levels_json(report)},
            now,
        )
        return {"levels": self._levels_json(report)}

    def _op_attach_segments(self, params: dict, now: int) -> dict:
        report = self._require_report(params["report_id"])
        self._require_reporter(report, params["actor"], "attach_segments", now)
        if report.state is not ReportState.ASSEMBLING:
            raise StateError("segments can only be attached while assembling")
        self._pin_segments(report, list(params.get("seg_ids") or []), now)
        report.transition("add_evidence")
        self._attest(report, now)
        self._audit(
            self._label(report, params["actor"]),
            "segments_attached",
            {
                "report_id": report.report_id,
                "segments": [s.seg_id for s in report.pinned_segments],
            },
            now,
        )
        return {"segments": [s.seg_id for s in report.pinned_segments]}

    def _op_add_media(self, params: dict, now: int) -> dict:
        report = self._require_report(params["report_id"])
        self._require_reporter(report, params["actor"], "add_media", now)
        if report.state is not ReportState.ASSEMBLING:
            raise StateError("media can only be added while assembling")
        item = MediaItem(
            media_id=self._next_id("media", "md"),
            description=params.get("description", ""),
            payload_b64=params.get("payload_b64", ""),
            claimed_sender=params.get("claimed_sender"),
            added_at=now,
        )
        report.media.append(item)
        report.transition("add_evidence")
        self._audit(
            self._label(report, params["actor"]),
            "media_added",
            {
                "report_id": report.report_id,
                "media_id": item.media_id,
                "provenance": item.provenance,
            },
            now,
        )
        return {"media_id": item.media_id, "provenance": item.provenance}

    # ── access control ──

    def _op_grant_access(self, params: dict, now: int) -> dict:
        report = self._require_report(params["report_id"])
        self._require_reporter(report, params["actor"], "grant_access", now)
        grantees = list(params.get("grantees") or [])
        if not grantees:
            raise ValidationError("a grant needs at least one grantee")
        for g in grantees:
            prof = self._require_profile(g)
            if not prof.is_moderator():
                raise ValidationError(f"grantee {moderator_handle(g)} holds no moderator role")
        view_limit = params.get("view_limit")
        if view_limit is not None and view_limit < 1:
            raise ValidationError("view_limit must be >= 1 or omitted for unlimited")
        grant = AccessGrant(
            grant_id=self._next_id("grant", "g"),
            report_id=report.report_id,
            grantees=frozenset(grantees),
            expires_at=params.get("expires_at"),
            remaining_views=view_limit,
        )
        self.grants[grant.grant_id] = grant
        report.grant_ids.append(grant.grant_id)
        self._audit(
            self._label(report, params["actor"]),
            "grant_issued",
            {
                "report_id": report.report_id,
                "grant_id": grant.grant_id,
                "grantees": sorted(moderator_handle(g) for g in grantees),
                "expires_at": grant.expires_at,
                "view_limit": view_limit,
            },
            now,
        )
        return {"grant_id": grant.grant_id}

    def _live_grant_for(self, report: Report, moderator: str, now: int) -> AccessGrant:
        covering = [
            self.grants[gid]
            for gid in report.grant_ids
            if self.grants[gid].covers(moderator)
        ]
        if not covering:
            raise GrantDeniedError("no_grant", "no grant covers this moderator")
        live = [g for g in covering if g.is_live(now)]
        if live:
            return live[0]
        if all(g.revoked for g in covering):
            raise GrantDeniedError("revoked", "all covering grants were revoked")
        if any(not g.is_expired(now) and not g.revoked for g in covering):
            raise GrantDeniedError("exhausted", "view budget exhausted")
        raise GrantDeniedError("expired", "all covering grants expired")

    def _fetch_common(self, params: dict, now: int, action: str) -> tuple[Report, AccessGrant]:
        report = self._require_report(params["report_id"])
        actor = params["actor"]
        self._require_moderator(actor)
        try:
            grant = self._live_grant_for(report, actor, now)
        except GrantDeniedError as exc:
            self._audit(
                self._label(report, actor),
                "evidence_fetch_denied",
                {"report_id": report.report_id, "action": action, "reason": exc.reason},
                now,
            )
            exc.audited = True
            raise
        return report, grant

    def _op_fetch_evidence(self, params: dict, now: int) -> dict:
        report, grant = self._fetch_common(params, now, "fetch_evidence")
        result = self._evidence_json(report)
        grant.consume()
        self._audit(
            self._label(report, params["actor"]),
            "evidence_fetched",
            {
                "report_id": report.report_id,
                "grant_id": grant.grant_id,
                "remaining_views": grant.remaining_views,
            },
            now,
        )
        return result

    def _op_preview_evidence(self, params: dict, now: int) -> dict:
        report = self._require_report(params["report_id"])
        self._require_reporter(report, params["actor"], "preview_evidence", now)
        result = self._evidence_json(report)
        self._audit(
            self._label(report, params["actor"]),
            "evidence_previewed",
            {"report_id": report.report_id},
            now,
        )
        return result

    # ── progressive disclosure ──

    def _op_open_request(self, params: dict, now: int) -> dict:
        report = self._require_report(params["report_id"])
        actor = params["actor"]
        if not report.is_assigned(actor):
            self._deny(report, actor, "open_request", now, "only assigned moderators may request")
        if report.state is not ReportState.UNDER_REVIEW:
            raise StateError("disclosure requests require an active review")
        requested_level = Level(params.get("requested_level", Level.FULL.value))
        targets = tuple(params.get("targets") or ())
        scoped = set(report.scoped_msg_ids)
        for t in targets:
            if t not in scoped:
                raise InvalidTargetError(f"{t} is not in the report's scope")
            current = report.view_levels[t].level
            if current is Level.FULL:
                raise InvalidTargetError(f"{t} is already at full visibility")
            if current is requested_level:
                raise InvalidTargetError(f"{t} is already at {current.value}")
            if requested_level is not Level.FULL and level_lt(requested_level, current):
                raise InvalidTargetError(
                    f"{t} already discloses more than {requested_level.value}"
                )
        criticality = Criticality(params.get("criticality", "informational"))
        request = DisclosureRequest(
            request_id=self._next_id("request", "dr"),
            report_id=report.report_id,
            requester=actor,
            targets=targets,
            justification=params.get("justification", ""),
            criticality=criticality,
            consequence_note=params.get("consequence_note")
            or DEFAULT_CONSEQUENCES[criticality],
            requested_level=requested_level,
        )
        report.requests[request.request_id] = request
        report.transition("review_action")
        self._audit(
            self._label(report, actor),
            "disclosure_requested",
            {
                "report_id": report.report_id,
                "request_id": request.request_id,
                "targets": list(targets),
                "justification": request.justification,
                "criticality": criticality.value,
                "requested_level": requested_level.value,
                "consequence_note": request.consequence_note,
            },
            now,
        )
        return request.to_json(moderator_handle(actor))

    def _find_request(self, request_id: str) -> tuple[Report, DisclosureRequest]:
        for report in self.reports.values():
            if request_id in report.requests:
                return report, report.requests[request_id]
        raise NotFoundError(f"unknown disclosure request {request_id}")

    def _op_respond_request(self, params: dict, now: int) -> dict:
        report, request = self._find_request(params["request_id"])
        actor = params["actor"]
        self._require_reporter(report, actor, "respond_request", now)
        if request.state is not RequestState.PENDING:
            raise StateError(f"request already {request.state.value}")
        decision = params.get("decision")
        if decision == "grant":
            supplied = params.get("views") or {}
            for t in request.targets:
                vis_json = supplied.get(t, {"level": request.requested_level.value})
                vis = VisibilityLevel.from_json(vis_json)
                if vis.level is not request.requested_level:
                    raise ValidationError(
                        f"grant for {t} must match the requested level "
                        f"{request.requested_level.value}"
                    )
                self._merge_views(report, {t: vis.to_json()})
            request.resolve(RequestState.GRANTED)
            self._attest(report, now)
            self._audit(
                self._label(report, actor),
                "disclosure_granted",
                {
                    "report_id": report.report_id,
                    "request_id": request.request_id,
                    "targets": list(request.targets),
                    "new_level": request.requested_level.value,
                    "levels": self._levels_json(report),
                },
                now,
            )
            return {"state": request.state.value, "levels": self._levels_json(report)}
        if decision == "deny":
            request.resolve(RequestState.DENIED)
            note = {
                "request_id": request.request_id,
                "note": "reporter declined a disclosure request",
                "criticality": request.criticality.value,
            }
            report.credibility_notes.append(note)
            flagged = False
            if request.criticality is Criticality.CRITICAL:
                report.flags.add("dismissible_for_nondisclosure")
                flagged = True
            self._audit(
                self._label(report, actor),
                "disclosure_denied",
                {
                    "report_id": report.report_id,
                    "request_id": request.request_id,
                    "criticality": request.criticality.value,
                    "dismissible_flag_set": flagged,
                },
                now,
            )
            return {"state": request.state.value, "flags": sorted(report.flags)}
        raise ValidationError("decision must be 'grant' or 'deny'")

    # ── bystander cross-examination ──

    def _resolve_party(self, report: Report, ref: str) -> str:
        account = report.pseudonyms.account_for(ref)
        if account is not None:
            return account
        return ref

    def _op_invite_bystander(self, params: dict, now: int) -> dict:
        report = self._require_report(params["report_id"])
        actor = params["actor"]
        if not report.is_assigned(actor):
            self._deny(report, actor, "invite_bystander", now, "only assigned moderators may invite")
        if report.state is not ReportState.UNDER_REVIEW:
            raise StateError("bystander invites require an active review")
        bystander = self._resolve_party(report, params["bystander"])
        self._require_profile(bystander)
        if bystander == report.reporter:
            raise ValidationError("the reporter cannot be their own bystander")
        if bystander == report.reported:
            raise ValidationError("the reported party is not invited during investigation")
        in_scope = any(
            bystander in self.conversations[cid].participants
            for cid in report.conversation_ids
            if cid in self.conversations
        )
        if not in_scope:
            raise ValidationError("bystander must participate in a scoped conversation")
        invite = BystanderInvite(
            invite_id=self._next_id("invite", "bi"),
            report_id=report.report_id,
            bystander=bystander,
            involvement=Involvement(params["involvement"]),
        )
        report.invites[invite.invite_id] = invite
        report.transition("review_action")
        label = report.pseudonyms.ensure(bystander).label
        self._audit(
            self._label(report, actor),
            "bystander_invited",
            {
                "report_id": report.report_id,
                "invite_id": invite.invite_id,
                "bystander": label,
                "involvement": invite.involvement.value,
            },
            now,
        )
        return invite.to_json(label)

    def _find_invite(self, invite_id: str) -> tuple[Report, BystanderInvite]:
        for report in self.reports.values():
            if invite_id in report.invites:
                return report, report.invites[invite_id]
        raise NotFoundError(f"unknown bystander invite {invite_id}")

    def _op_consent_invite(self, params: dict, now: int) -> dict:
        report, invite = self._find_invite(params["invite_id"])
        actor = params["actor"]
        self._require_reporter(report, actor, "consent_invite", now)
        if invite.consent is not ConsentState.AWAITING_REPORTER:
            raise StateError(f"invite already {invite.consent.value}")
        approve = bool(params.get("approve"))
        invite.consent = (
            ConsentState.REPORTER_APPROVED if approve else ConsentState.REPORTER_DECLINED
        )
        label = report.pseudonyms.ensure(invite.bystander).label
        self._audit(
            self._label(report, actor),
            "consent_recorded",
            {
                "report_id": report.report_id,
                "invite_id": invite.invite_id,
                "approved": approve,
            },
            now,
        )
        if approve:
            # Contact strictly after the consent event is durable.
            invite.contacted = True
            self.notifications.setdefault(invite.bystander, []).append(
                {
                    "kind": "bystander_invite",
                    "invite_id": invite.invite_id,
                    "report_id": report.report_id,
                    "involvement": invite.involvement.value,
                    "at": now,
                }
            )
            self._audit(
                "platform",
                "bystander_contacted",
                {
                    "report_id": report.report_id,
                    "invite_id": invite.invite_id,
                    "bystander": label,
                },
                now,
            )
        return invite.to_json(label)

    def _op_submit_finding(self, params: dict, now: int) -> dict:
        report, invite = self._find_invite(params["invite_id"])
        actor = params["actor"]
        if actor != invite.bystander:
            self._deny(report, actor, "submit_finding", now, "only the invited bystander may respond")
        if invite.consent is not ConsentState.REPORTER_APPROVED:
            self._deny(report, actor, "submit_finding", now, "invite is not reporter-approved")
        raw = params.get("finding") or {}
        finding = BystanderFinding(
            invite_id=invite.invite_id,
            verdict=raw.get("verdict"),
            flags=tuple(raw.get("flags") or ()),
            disclosures=tuple(
                (d["msg_ref"], d.get("description", "")) for d in raw.get("disclosures") or ()
            ),
        )
        validate_finding_shape(invite.involvement, finding)
        report.findings.append(finding)
        for msg_ref, description in finding.disclosures:
            report.testimony.append(
                TestimonyItem(
                    invite_id=invite.invite_id,
                    msg_ref=msg_ref,
                    description=description,
                    by_label=report.pseudonyms.ensure(invite.bystander).label,
                )
            )
        report.transition("review_action")
        self._audit(
            self._label(report, actor),
            "finding_submitted",
            {
                "report_id": report.report_id,
                "invite_id": invite.invite_id,
                "involvement": invite.involvement.value,
                "verdict": finding.verdict,
                "flags": list(finding.flags),
                "disclosed_refs": [ref for ref, _ in finding.disclosures],
            },
            now,
        )
        return finding.to_json()

    # ── lifecycle ──

    def _conflicted_moderators(self, report: Report) -> frozenset[str]:
        out = set()
        for cid in report.conversation_ids:
            conv = self.conversations.get(cid)
            if conv is None:
                continue
            for participant in conv.participants:
                prof = self.profiles.get(participant)
                if prof is not None and prof.is_moderator():
                    out.add(participant)
        return frozenset(out)

    def _op_assign(self, params: dict, now: int) -> dict:
        report = self._require_report(params["report_id"])
        actor = params["actor"]
        self._require_moderator(actor)
        if report.state is not ReportState.ASSEMBLING:
            raise StateError("assignment happens from assembling")
        request = AssignmentRequest(
            preferred=tuple(params.get("preferred") or ()),
            excluded=tuple(
                (e["moderator"], e.get("justification", ""))
                for e in params.get("excluded") or ()
            ),
        )
        pool = params.get("pool") or sorted(
            a for a, p in self.profiles.items() if p.is_moderator()
        )
        assigned = select_moderators(
            pool, request, self._conflicted_moderators(report), count=self.config.assign_count
        )
        report.assigned = assigned
        report.transition("assign")
        self._audit(
            self._label(report, actor),
            "moderators_assigned",
            {
                "report_id": report.report_id,
                "assigned": [moderator_handle(a) for a in assigned],
                "excluded": [
                    {"moderator": moderator_handle(m), "justification": j}
                    for m, j in request.excluded
                ],
            },
            now,
        )
        return {
            "assigned": [self.moderator_profile_json(a) for a in assigned],
            "state": report.state.value,
        }

    def moderator_profile_json(self, account: str, now: int | None = None) -> dict:
        prof = self._require_profile(account)
        at = now if now is not None else self._now_floor
        return ModeratorProfile(
            handle=moderator_handle(account),
            tenure_days=max(0, (at - prof.join_date) // 86_400_000),
            reports_reviewed=self._reviewed.get(account, 0),
            endorsed_values=tuple(fixtures.ENDORSED_VALUES.get(account, ())),
        ).to_json()

    def _apply_punishment(self, report: Report, kind: Punishment, now: int) -> None:
        if kind is Punishment.NONE:
            return
        self.punishments.append(
            PunishmentRecord(report.report_id, report.reported, kind, now)
        )
        self._audit(
            "platform",
            "punishment_applied",
            {
                "report_id": report.report_id,
                "punishment": kind.value,
                "account": self._label(report, report.reported),
            },
            now,
        )

    def _op_decide(self, params: dict, now: int) -> dict:
        report = self._require_report(params["report_id"])
        actor = params["actor"]
        if not report.is_assigned(actor):
            self._deny(report, actor, "decide", now, "only assigned moderators may decide")
        if report.state is not ReportState.UNDER_REVIEW:
            raise StateError("decisions happen under review")
        pending_critical = [
            r
            for r in report.requests.values()
            if r.state is RequestState.PENDING and r.criticality is Criticality.CRITICAL
        ]
        if pending_critical:
            raise BlockedError(
                "pending critical disclosure requests: "
                + ", ".join(r.request_id for r in pending_critical)
            )
        decision = Decision.from_json(params.get("decision") or {})
        report.decision = decision
        report.decided_at = now
        report.transition("decide")
        for mod in report.assigned:
            self._reviewed[mod] = self._reviewed.get(mod, 0) + 1
        if decision.outcome is Outcome.UPHOLD:
            if decision.punishment_timing is PunishmentTiming.IMMEDIATE:
                self._apply_punishment(report, decision.punishment, now)
            else:
                report.pending_punishment = decision.punishment
        self._audit(
            self._label(report, actor),
            "decision_recorded",
            {
                "report_id": report.report_id,
                "decision": decision.to_json(),
                "cited_flags": sorted(report.flags),
            },
            now,
        )
        return {"state": report.state.value, "decision": decision.to_json()}

    def _scope_is_direct(self, report: Report) -> bool:
        return any(
            self.conversations[cid].kind is ConversationKind.DIRECT
            for cid in report.conversation_ids
            if cid in self.conversations
        )

    def _op_notify(self, params: dict, now: int) -> dict:
        report = self._require_report(params["report_id"])
        actor = params["actor"]
        if not report.is_assigned(actor):
            self._deny(report, actor, "notify", now, "only assigned moderators may notify")
        if report.state is not ReportState.DECIDED:
            raise StateError("notification follows a decision")
        assert report.decision is not None
        requested = Granularity(params.get("granularity", "generic"))
        used = requested
        downgraded = False
        if self._scope_is_direct(report) and requested is not Granularity.GENERIC:
            used = Granularity.GENERIC
            downgraded = True

        reported_notice: dict | None = None
        if report.decision.outcome is Outcome.UPHOLD:
            reported_notice = {
                "report_id": report.report_id,
                "policy_violated": report.decision.policy_violated,
                "punishment": report.decision.punishment.value,
                "punishment_timing": report.decision.punishment_timing.value,
            }
            if used in (Granularity.POLICY_ONLY, Granularity.MESSAGE_LEVEL):
                reported_notice["conversation_id"] = (
                    report.conversation_ids[0] if report.conversation_ids else None
                )
            if used is Granularity.MESSAGE_LEVEL:
                excerpt = self._offending_excerpt(report, params.get("offending_msg_id"))
                reported_notice["excerpt"] = excerpt
            self.notifications.setdefault(report.reported, []).append(
                {"kind": "decision_notice", "at": now, **reported_notice}
            )
        reporter_notice = {
            "report_id": report.report_id,
            "outcome": report.decision.outcome.value,
        }
        self.notifications.setdefault(report.reporter, []).append(
            {"kind": "report_outcome", "at": now, **reporter_notice}
        )
        report.notices.append(
            {
                "granularity_requested": requested.value,
                "granularity_used": used.value,
                "downgraded": downgraded,
                "to_reported": reported_notice,
                "to_reporter": reporter_notice,
            }
        )
        report.notified_at = now
        report.transition("notify")
        self._audit(
            self._label(report, actor),
            "notice_sent",
            {
                "report_id": report.report_id,
                "granularity_requested": requested.value,
                "granularity_used": used.value,
                "downgraded": downgraded,
                "reported_notified": reported_notice is not None,
            },
            now,
        )
        return report.notices[-1]

    def _offending_excerpt(self, report: Report, msg_id: str | None) -> str:
        candidates = [
            mid
            for mid in report.scoped_msg_ids
            if report.view_levels.get(mid) is not None
            and report.view_levels[mid].level in (Level.FULL, Level.REDACTED)
            and self.messages_by_id[mid].sender == report.reported
        ]
        chosen = msg_id if msg_id in candidates else (candidates[0] if candidates else None)
        if chosen is None:
            raise ValidationError(
                "message_level notice requires a body-bearing view of a reported-party message"
            )
        m = self.messages_by_id[chosen]
        view = minimize(m, report.view_levels[chosen], self.minimizer)
        assert view is not None
        body = rendered_body(view) or ""
        return body[:140]

    def _appeal_deadline(self, report: Report) -> int:
        assert report.notified_at is not None
        return report.notified_at + self.config.appeal_window_days * 86_400_000

    def _op_appeal_file(self, params: dict, now: int) -> dict:
        report = self._require_report(params["report_id"])
        actor = params["actor"]
        if actor != report.reported:
            self._deny(report, actor, "appeal_file", now, "only the reported party may appeal")
        if report.state is not ReportState.NOTIFIED:
            raise StateError("appeals follow notification")
        if now > self._appeal_deadline(report):
            raise StateError("appeal window lapsed")
        statement = params.get("statement", "")
        if not statement.strip():
            raise ValidationError("an appeal requires a statement")
        report.appeal = {"statement": statement, "filed_at": now, "resolution": None}
        report.transition("appeal")
        self._audit(
            self._label(report, actor),
            "appeal_filed",
            {"report_id": report.report_id},
            now,
        )
        return {"state": report.state.value}

    def _revoke_grants(self, report: Report, now: int) -> None:
        revoked = []
        for gid in report.grant_ids:
            grant = self.grants[gid]
            if not grant.revoked:
                grant.revoked = True
                revoked.append(gid)
        self._audit(
            "platform",
            "grants_revoked",
            {"report_id": report.report_id, "grants": revoked},
            now,
        )

    def _op_appeal_resolve(self, params: dict, now: int) -> dict:
        report = self._require_report(params["report_id"])
        actor = params["actor"]
        if not report.is_assigned(actor):
            self._deny(report, actor, "appeal_resolve", now, "only assigned moderators may resolve")
        if report.state is not ReportState.APPEAL_OPEN:
            raise StateError("no open appeal to resolve")
        resolution = params.get("resolution")
        assert report.appeal is not None
        if resolution == "affirm":
            report.transition("resolve_appeal_affirm")
            report.appeal["resolution"] = "affirmed"
            if report.pending_punishment is not None:
                self._apply_punishment(report, report.pending_punishment, now)
                report.pending_punishment = None
        elif resolution == "reverse":
            report.transition("resolve_appeal_reverse")
            report.appeal["resolution"] = "reversed"
            report.pending_punishment = None  # never applied
        else:
            raise ValidationError("resolution must be 'affirm' or 'reverse'")
        self._audit(
            self._label(report, actor),
            "appeal_resolved",
            {"report_id": report.report_id, "resolution": report.appeal["resolution"]},
            now,
        )
        self._revoke_grants(report, now)
        return {"state": report.state.value, "resolution": report.appeal["resolution"]}

    def _op_close_window(self, params: dict, now: int) -> dict:
        report = self._require_report(params["report_id"])
        actor = params["actor"]
        if not report.is_assigned(actor):
            self._deny(report, actor, "close_window", now, "only assigned moderators may close")
        if report.state is ReportState.NOTIFIED:
            if now <= self._appeal_deadline(report):
                raise StateError("appeal window still open")
            report.transition("close")
            if report.pending_punishment is not None:
                self._apply_punishment(report, report.pending_punishment, now)
                report.pending_punishment = None
        elif report.state is ReportState.APPEAL_RESOLVED:
            report.transition("close")
        else:
            raise StateError("close applies after notification or appeal resolution")
        self._audit(
            self._label(report, actor),
            "report_closed",
            {"report_id": report.report_id},
            now,
        )
        self._revoke_grants(report, now)
        return {"state": report.state.value}

    def _op_terminate(self, params: dict, now: int) -> dict:
        report = self._require_report(params["report_id"])
        actor = params["actor"]
        reason = params.get("reason")
        if reason not in ("consent_refused", "reporter_withdrawn"):
            raise ValidationError("reason must be consent_refused or reporter_withdrawn")
        if reason == "reporter_withdrawn":
            self._require_reporter(report, actor, "terminate", now)
        else:
            if not report.is_assigned(actor):
                self._deny(report, actor, "terminate", now, "only assigned moderators may terminate")
        if report.state in TERMINAL_STATES or report.state is ReportState.APPEAL_RESOLVED:
            raise StateError(f"report already terminal ({report.state.value})")
        report.transition("terminate")
        report.terminated_reason = reason
        report.pending_punishment = None
        self._audit(
            self._label(report, actor),
            "report_terminated",
            {"report_id": report.report_id, "reason": reason},
            now,
        )
        self._revoke_grants(report, now)
        return {"state": report.state.value, "reason": reason}

    # ── identity, tags ──

    def _op_resolve_identity(self, params: dict, now: int) -> dict:
        report = self._require_report(params["report_id"])
        actor = params["actor"]
        if not report.is_assigned(actor):
            self._deny(report, actor, "resolve_identity", now, "caller is not assigned to this report")
        prof = self._require_profile(actor)
        pseudonym = params["pseudonym"]
        account = report.pseudonyms.account_for(pseudonym)
        if account is None:
            raise NotFoundError(f"unknown pseudonym {pseudonym}")
        visible = identity_visible(report.identifier_policy, report.state, prof.roles)
        self._audit(
            self._label(report, actor),
            "identity_resolution",
            {
                "report_id": report.report_id,
                "pseudonym": pseudonym,
                "outcome": "revealed" if visible else "withheld",
            },
            now,
        )
        if visible:
            return {"pseudonym": pseudonym, "account_id": account, "resolved": True}
        return {"pseudonym": pseudonym, "resolved": False}

    def _op_assign_tag(self, params: dict, now: int) -> dict:
        actor = params["actor"]
        self._require_moderator(actor)
        subject = params.get("subject")
        if not subject and params.get("report_id") and params.get("pseudonym"):
            report = self._require_report(params["report_id"])
            subject = report.pseudonyms.account_for(params["pseudonym"])
        if not subject:
            raise ValidationError("tag needs a subject account or report pseudonym")
        self._require_profile(subject)
        tag = ModeratorTag(
            subject=subject, label=params.get("label", ""), author=actor, created_at=now
        )
        self.tags.append(tag)
        self._audit(
            moderator_handle(actor),
            "tag_assigned",
            {"subject": account_ref(subject), "label": tag.label},
            now,
        )
        return {"subject_ref": account_ref(subject), "label": tag.label}

    def tags_for(self, subject: str) -> list[ModeratorTag]:
        with self._lock:
            return [t for t in self.tags if t.subject == subject]

    # ── export / import ──

    def _op_export_bundle(self, params: dict, now: int) -> dict:
        report, grant = self._fetch_common(params, now, "export_bundle")
        rendered = self._render_bundle(report)
        if report.token is None:
            raise StateError("report has no attested bundle")
        grant.consume()
        self._audit(
            self._label(report, params["actor"]),
            "bundle_exported",
            {
                "report_id": report.report_id,
                "grant_id": grant.grant_id,
                "remaining_views": grant.remaining_views,
            },
            now,
        )
        return {
            "format": EXPORT_FORMAT,
            "report_id": report.report_id,
            "pseudonymous": report.pseudonymous,
            "views": rendered,
            "token": report.token.to_json(),
        }

    def _op_import_bundle(self, params: dict, now: int) -> dict:
        actor = params["actor"]
        self._require_moderator(actor)
        bundle = params.get("bundle") or {}
        if bundle.get("format") != EXPORT_FORMAT:
            raise ValidationError(f"unsupported bundle format {bundle.get('format')!r}")
        views = bundle.get("views")
        if not isinstance(views, list):
            raise ValidationError("bundle views must be a list")
        token = AttestationToken.from_json(bundle.get("token") or {})
        verification = verify_forwarded(views, token, self.keys)  # UnknownKeyError propagates
        if not verification.mac_valid:
            raise MacInvalidError("bundle failed attestation verification")
        record = {
            "import_id": self._next_id("import", "imp"),
            "report_id": bundle.get("report_id"),
            "views": views,
            "pseudonymous": bool(bundle.get("pseudonymous")),
            "verification": verification.to_json(),
            "imported_at": now,
        }
        self.imports.append(record)
        self._audit(
            moderator_handle(actor),
            "bundle_imported",
            {
                "report_id": bundle.get("report_id"),
                "import_id": record["import_id"],
                "mac_valid": True,
            },
            now,
        )
        return {"import_id": record["import_id"], "verification": record["verification"]}

    # ── key rotation ──

    def _op_rotate_key(self, params: dict, now: int) -> dict:
        new_id = params["new_id"]
        if self.keys.get(new_id) is None:
            self.keys.rotate(new_id)
            self.keys.save(self.config.key_store_path)
        self._audit("platform", "key_rotated", {"key_id": new_id}, now)
        return {"active_key": new_id}

    # ── recorded authorization denials from the HTTP layer ──

    def _op_authz_denied(self, params: dict, now: int) -> dict:
        report = self.reports.get(params.get("report_id") or "")
        self._audit(
            self._label(report, params["actor"]),
            "authz_denied",
            {
                "action": params.get("action", "?"),
                **({"report_id": report.report_id} if report else {}),
            },
            now,
        )
        return {}

    # ── reads (lock-guarded, never WAL-logged) ──

    def report_detail(self, report_id: str, viewer: str) -> dict:
        with self._lock:
            report = self._require_report(report_id)
            is_reporter = viewer == report.reporter
            is_mod = report.is_assigned(viewer)
            if not (is_reporter or is_mod):
                raise AuthorizationError("not a participant in this report's review")
            parties = []
            for account, pseud in report.pseudonyms.items():
                entry: dict[str, Any] = {"pseudonym": pseud.label, "role": pseud.role}
                if not report.pseudonymous:
                    entry["account_id"] = account
                entry["tags"] = [
                    {
                        "label": t.label,
                        "author": moderator_handle(t.author),
                        "created_at": t.created_at,
                    }
                    for t in self.tags
                    if t.subject == account
                ]
                parties.append(entry)
            detail: dict[str, Any] = {
                "report_id": report.report_id,
                "state": report.state.value,
                "reason": report.reason,
                "created_at": report.created_at,
                "identifier_policy": report.identifier_policy.value,
                "pseudonymous": report.pseudonymous,
                "scope": report.scope_policy.to_json(),
                "conversations": report.conversation_ids,
                "parties": parties,
                "attested": report.token is not None,
                "token": report.token.to_json() if report.token else None,
                "flags": sorted(report.flags),
                "credibility_notes": report.credibility_notes,
                "requests": [
                    r.to_json(moderator_handle(r.requester))
                    for r in report.requests.values()
                ],
                "invites": [
                    i.to_json(report.pseudonyms.ensure(i.bystander).label)
                    for i in report.invites.values()
                ],
                "findings": [f.to_json() for f in report.findings],
                "impersonation": report.impersonation,
                "assigned": [self.moderator_profile_json(a) for a in report.assigned],
                "media": self._annex_json(report)["media"],
                "testimony": self._annex_json(report)["testimony"],
                "segments": [
                    {
                        "seg_id": s.seg_id,
                        "speaker": self._party_ref(report, s.speaker),
                        "captured_at": s.captured_at,
                    }
                    for s in report.pinned_segments
                ],
                "reporter_rate_flagged": report.reporter in self.rate_flagged,
                "decision": report.decision.to_json() if report.decision else None,
                "appeal": report.appeal,
                "notices": report.notices if (is_reporter or is_mod) else [],
                "punishment_pending": report.pending_punishment.value
                if report.pending_punishment
                else None,
            }
            if is_reporter:
                detail["view_levels"] = {
                    mid: vis.to_json() for mid, vis in sorted(report.view_levels.items())
                }
                detail["grants"] = [
                    {
                        "grant_id": g.grant_id,
                        "grantees": sorted(moderator_handle(x) for x in g.grantees),
                        "expires_at": g.expires_at,
                        "remaining_views": g.remaining_views,
                        "revoked": g.revoked,
                    }
                    for g in (self.grants[gid] for gid in report.grant_ids)
                ]
            return detail

    def audit_for_report(self, report_id: str, viewer: str) -> list[dict]:
        with self._lock:
            report = self._require_report(report_id)
            if not (viewer == report.reporter or report.is_assigned(viewer)):
                raise AuthorizationError("not a participant in this report's review")
            return [e.to_json() for e in self.audit.events_for_report(report_id)]

    def export_audit(self) -> str:
        with self._lock:
            return self.audit.export_ndjson()

    def verify_chain(self) -> tuple[bool, int | None]:
        with self._lock:
            return verify_audit_chain(self.audit.events)

    @property
    def head_hash(self) -> bytes:
        with self._lock:
            return self.audit.head_hash

    def transitions_json(self) -> dict:
        return transition_table_json()

    def punishments_for(self, account: str) -> list[PunishmentRecord]:
        with self._lock:
            return [p for p in self.punishments if p.account == account]

    def notifications_for(self, account: str) -> list[dict]:
        with self._lock:
            return list(self.notifications.get(account, []))

    def moderator_profile_by_handle(self, handle: str) -> dict:
        with self._lock:
            for account, prof in self.profiles.items():
                if prof.is_moderator() and moderator_handle(account) == handle:
                    return self.moderator_profile_json(account)
            raise NotFoundError(f"unknown moderator handle {handle}")

    def close(self) -> None:
        if self._wal is not None:
            self._wal.close()
