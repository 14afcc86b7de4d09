"""Versioned HTTP JSON API over the engine.

Authentication is bearer-token per account; every role and ownership check
is enforced here or in the engine regardless of client behavior, so a
UI-bounded attacker gains nothing by skipping the console. In harness mode
the X-Test-Clock header supplies a logical clock; real deployments ignore
it.
"""

from __future__ import annotations

from typing import Any

from fastapi import FastAPI, Query, Request
from fastapi.responses import JSONResponse, PlainTextResponse

from .engine import Engine
from .errors import (
    AuthorizationError,
    GrantDeniedError,
    NotFoundError,
    ReportingError,
)
from .model import Role

API_PREFIX = "/api/v1"


def session_token(account_id: str) -> str:
    """Deterministic fixture/bootstrap token for an account."""
    return f"tok-{account_id}"


def create_app(engine: Engine) -> FastAPI:
    app = FastAPI(title="reportflow", version="1")
    app.state.engine = engine

    def principal(request: Request) -> str:
        header = request.headers.get("authorization", "")
        if not header.lower().startswith("bearer "):
            raise AuthorizationError("missing bearer token")
        token = header[7:].strip()
        if not token.startswith("tok-"):
            raise AuthorizationError("unknown token")
        account = token[4:]
        if account not in engine.profiles:
            raise AuthorizationError("unknown token")
        return account

    def clock(request: Request) -> int | None:
        if not engine.config.harness_mode:
            return None
        raw = request.headers.get("x-test-clock")
        return int(raw) if raw is not None else None

    def log_denied(actor: str, action: str, report_id: str | None, now: int | None):
        try:
            engine.execute(
                "authz_denied",
                {"actor": actor, "action": action, "report_id": report_id},
                now,
            )
        except ReportingError:
            pass

    @app.exception_handler(ReportingError)
    async def reporting_error_handler(request: Request, exc: ReportingError):
        return JSONResponse(
            status_code=exc.http_status, content={"error": exc.code, "detail": exc.detail}
        )

    def run(
        request: Request, op: str, params: dict, report_id: str | None = None
    ) -> Any:
        """Authenticate, execute one engine op, audit unlogged denials."""
        actor = principal(request)
        now = clock(request)
        params = {**params, "actor": actor}
        try:
            return engine.execute(op, params, now)
        except AuthorizationError as exc:
            if not getattr(exc, "audited", False):
                log_denied(actor, op, report_id or params.get("report_id"), now)
            raise

    # ── reports ──

    @app.post(API_PREFIX + "/reports")
    async def file_report(request: Request):
        body = await request.json()
        actor = principal(request)
        params = {
            "reporter": actor,
            "reported": body.get("reported"),
            "reason": body.get("reason", ""),
            "scope": body.get("scope"),
            "conversations": body.get("conversations"),
            "views": body.get("views"),
            "segments": body.get("segments"),
            "identifier_policy": body.get("identifier_policy"),
        }
        return engine.execute("file_report", params, clock(request))

    @app.get(API_PREFIX + "/reports/{report_id}")
    async def get_report(
        request: Request, report_id: str, resolve: str | None = Query(default=None)
    ):
        actor = principal(request)
        now = clock(request)
        if resolve is not None:
            return run(request, "resolve_identity", {"report_id": report_id, "pseudonym": resolve}, report_id)
        try:
            return engine.report_detail(report_id, actor)
        except AuthorizationError:
            log_denied(actor, "get_report", report_id, now)
            raise

    @app.post(API_PREFIX + "/reports/{report_id}/scope")
    async def set_scope(request: Request, report_id: str):
        body = await request.json()
        return run(
            request,
            "set_scope",
            {
                "report_id": report_id,
                "scope": body.get("scope"),
                "conversations": body.get("conversations"),
            },
            report_id,
        )

    @app.post(API_PREFIX + "/reports/{report_id}/views")
    async def set_views(request: Request, report_id: str):
        body = await request.json()
        return run(
            request, "set_views", {"report_id": report_id, "views": body.get("views")}, report_id
        )

    @app.post(API_PREFIX + "/reports/{report_id}/segments")
    async def attach_segments(request: Request, report_id: str):
        body = await request.json()
        return run(
            request,
            "attach_segments",
            {"report_id": report_id, "seg_ids": body.get("seg_ids")},
            report_id,
        )

    @app.post(API_PREFIX + "/reports/{report_id}/media")
    async def add_media(request: Request, report_id: str):
        body = await request.json()
        return run(
            request,
            "add_media",
            {
                "report_id": report_id,
                "description": body.get("description", ""),
                "payload_b64": body.get("payload_b64", ""),
                "claimed_sender": body.get("claimed_sender"),
            },
            report_id,
        )

    @app.post(API_PREFIX + "/reports/{report_id}/grants")
    async def grant_access(request: Request, report_id: str):
        body = await request.json()
        return run(
            request,
            "grant_access",
            {
                "report_id": report_id,
                "grantees": body.get("grantees"),
                "expires_at": body.get("expires_at"),
                "view_limit": body.get("view_limit"),
            },
            report_id,
        )

    @app.get(API_PREFIX + "/reports/{report_id}/evidence")
    async def get_evidence(request: Request, report_id: str):
        actor = principal(request)
        report = engine.reports.get(report_id)
        if report is None:
            raise NotFoundError(f"unknown report {report_id}")
        op = "preview_evidence" if actor == report.reporter else "fetch_evidence"
        return run(request, op, {"report_id": report_id}, report_id)

    # ── disclosure protocol ──

    @app.post(API_PREFIX + "/reports/{report_id}/disclosure-requests")
    async def open_request(request: Request, report_id: str):
        body = await request.json()
        return run(
            request,
            "open_request",
            {
                "report_id": report_id,
                "targets": body.get("targets"),
                "justification": body.get("justification", ""),
                "criticality": body.get("criticality", "informational"),
                "consequence_note": body.get("consequence_note"),
                "requested_level": body.get("requested_level", "full"),
            },
            report_id,
        )

    @app.post(API_PREFIX + "/disclosure-requests/{request_id}/respond")
    async def respond_request(request: Request, request_id: str):
        body = await request.json()
        return run(
            request,
            "respond_request",
            {
                "request_id": request_id,
                "decision": body.get("decision"),
                "views": body.get("views"),
            },
        )

    @app.post(API_PREFIX + "/reports/{report_id}/bystander-invites")
    async def invite_bystander(request: Request, report_id: str):
        body = await request.json()
        return run(
            request,
            "invite_bystander",
            {
                "report_id": report_id,
                "bystander": body.get("bystander"),
                "involvement": body.get("involvement"),
            },
            report_id,
        )

    @app.post(API_PREFIX + "/bystander-invites/{invite_id}/consent")
    async def consent_invite(request: Request, invite_id: str):
        body = await request.json()
        return run(
            request,
            "consent_invite",
            {"invite_id": invite_id, "approve": body.get("approve")},
        )

    @app.post(API_PREFIX + "/bystander-invites/{invite_id}/finding")
    async def submit_finding(request: Request, invite_id: str):
        body = await request.json()
        return run(
            request,
            "submit_finding",
            {"invite_id": invite_id, "finding": body.get("finding")},
        )

    # ── lifecycle ──

    @app.post(API_PREFIX + "/reports/{report_id}/assign")
    async def assign(request: Request, report_id: str):
        body = await request.json()
        return run(
            request,
            "assign",
            {
                "report_id": report_id,
                "preferred": body.get("preferred"),
                "excluded": body.get("excluded"),
                "pool": body.get("pool"),
            },
            report_id,
        )

    @app.post(API_PREFIX + "/reports/{report_id}/decide")
    async def decide(request: Request, report_id: str):
        body = await request.json()
        return run(
            request,
            "decide",
            {"report_id": report_id, "decision": body.get("decision")},
            report_id,
        )

    @app.post(API_PREFIX + "/reports/{report_id}/notify")
    async def notify(request: Request, report_id: str):
        body = await request.json()
        return run(
            request,
            "notify",
            {
                "report_id": report_id,
                "granularity": body.get("granularity", "generic"),
                "offending_msg_id": body.get("offending_msg_id"),
            },
            report_id,
        )

    @app.post(API_PREFIX + "/reports/{report_id}/appeal")
    async def appeal(request: Request, report_id: str):
        body = await request.json()
        action = body.get("action", "file")
        if action == "file":
            return run(
                request,
                "appeal_file",
                {"report_id": report_id, "statement": body.get("statement", "")},
                report_id,
            )
        if action == "resolve":
            return run(
                request,
                "appeal_resolve",
                {"report_id": report_id, "resolution": body.get("resolution")},
                report_id,
            )
        if action == "close_window":
            return run(request, "close_window", {"report_id": report_id}, report_id)
        raise ReportingError(f"unknown appeal action {action!r}")

    @app.post(API_PREFIX + "/reports/{report_id}/terminate")
    async def terminate(request: Request, report_id: str):
        body = await request.json()
        return run(
            request,
            "terminate",
            {"report_id": report_id, "reason": body.get("reason")},
            report_id,
        )

    # ── audit, export, import ──

    @app.get(API_PREFIX + "/reports/{report_id}/audit")
    async def report_audit(request: Request, report_id: str):
        actor = principal(request)
        now = clock(request)
        try:
            return {"events": engine.audit_for_report(report_id, actor)}
        except AuthorizationError:
            log_denied(actor, "report_audit", report_id, now)
            raise

    @app.get(API_PREFIX + "/reports/{report_id}/export")
    async def export_bundle(request: Request, report_id: str):
        return run(request, "export_bundle", {"report_id": report_id}, report_id)

    @app.post(API_PREFIX + "/import")
    async def import_bundle(request: Request):
        body = await request.json()
        return run(request, "import_bundle", {"bundle": body})

    @app.get(API_PREFIX + "/audit/export")
    async def audit_export(request: Request):
        actor = principal(request)
        prof = engine.profiles[actor]
        if not prof.roles & {Role.SENIOR_MODERATOR, Role.PLATFORM_MODERATOR}:
            log_denied(actor, "audit_export", None, clock(request))
            raise AuthorizationError("full audit export is senior/platform only")
        return PlainTextResponse(engine.export_audit(), media_type="application/x-ndjson")

    # ── conversations, moderators, meta ──

    @app.post(API_PREFIX + "/conversations/{conv_id}/segments")
    async def append_segment(request: Request, conv_id: str):
        body = await request.json()
        return run(
            request,
            "append_segment",
            {
                "conv_id": conv_id,
                "seg_id": body.get("seg_id"),
                "captured_at": body.get("captured_at"),
                "payload_b64": body.get("payload_b64", ""),
            },
        )

    @app.get(API_PREFIX + "/conversations/{conv_id}/reportable")
    async def reportable(request: Request, conv_id: str):
        actor = principal(request)
        now = clock(request)
        try:
            return {"segments": engine.reportable_segments(conv_id, actor, now)}
        except AuthorizationError:
            log_denied(actor, "reportable", None, now)
            raise

    @app.get(API_PREFIX + "/moderators/{handle}/profile")
    async def moderator_profile(request: Request, handle: str):
        principal(request)
        return engine.moderator_profile_by_handle(handle)

    @app.get(API_PREFIX + "/meta/transitions")
    async def transitions(request: Request):
        return engine.transitions_json()

    return app
