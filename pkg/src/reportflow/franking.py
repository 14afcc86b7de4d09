"""Platform-side authenticity: frank tags over messages, attestation tokens
over rendered evidence bundles, and verification of forwarded bundles.

The platform is trusted and sees plaintext, so a server-held HMAC-SHA256
suffices; no commitments or deniability machinery. Tokens carry a key_id so
keys can rotate with old keys retained read-only for verification.
"""

from __future__ import annotations

import base64
import hashlib
import hmac
import json
import secrets
import struct
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

from .errors import AttestationRefusedError, UnknownKeyError, ValidationError
from .model import AccountId, Message, UserProfile, canonical_serialize

TAG_LEN = 32


class ProvenanceClass(str, Enum):
    ATTESTED = "attested"
    UNATTESTED = "unattested"


@dataclass(frozen=True)
class PlatformKey:
    key_id: str
    secret: bytes

    def __post_init__(self):
        if len(self.secret) != 32:
            raise ValidationError("platform key secret must be 32 bytes")

    def __repr__(self) -> str:  # secret never leaves via repr/logs
        return f"PlatformKey(key_id={self.key_id!r}, secret=<hidden>)"


class KeyStore:
    """key_id -> key mapping with one active signing key.

    Rotation adds a new active key; superseded keys stay readable so old
    tokens keep verifying.
    """

    def __init__(self, keys: dict[str, PlatformKey], active_id: str):
        if active_id not in keys:
            raise ValidationError(f"active key {active_id!r} not in store")
        self._keys = dict(keys)
        self._active_id = active_id

    @classmethod
    def generate(cls, key_id: str = "k1") -> "KeyStore":
        return cls({key_id: PlatformKey(key_id, secrets.token_bytes(32))}, key_id)

    @property
    def active(self) -> PlatformKey:
        return self._keys[self._active_id]

    def get(self, key_id: str) -> PlatformKey | None:
        return self._keys.get(key_id)

    def rotate(self, new_id: str) -> PlatformKey:
        if new_id in self._keys:
            raise ValidationError(f"key id {new_id!r} already exists")
        key = PlatformKey(new_id, secrets.token_bytes(32))
        self._keys[new_id] = key
        self._active_id = new_id
        return key

    def save(self, path: str | Path) -> None:
        data = {
            "active": self._active_id,
            "keys": {
                kid: base64.b64encode(k.secret).decode("ascii")
                for kid, k in self._keys.items()
            },
        }
        Path(path).write_text(json.dumps(data, indent=2))

    @classmethod
    def load(cls, path: str | Path) -> "KeyStore":
        data = json.loads(Path(path).read_text())
        keys = {
            kid: PlatformKey(kid, base64.b64decode(b64))
            for kid, b64 in data["keys"].items()
        }
        return cls(keys, data["active"])


def frank(m: Message, key: PlatformKey) -> bytes:
    """32-byte MAC over the message's canonical bytes."""
    return hmac.new(key.secret, canonical_serialize(m), hashlib.sha256).digest()


def verify_frank(m: Message, key: PlatformKey, tag: bytes | None = None) -> bool:
    """Check a tag (the message's stored one by default) against ``m``."""
    candidate = m.frank_tag if tag is None else tag
    if len(candidate) != TAG_LEN:
        return False
    return hmac.compare_digest(frank(m, key), candidate)


def frank_bytes(payload: bytes, key: PlatformKey) -> bytes:
    """MAC over raw bytes; used for ephemeral segment payloads."""
    return hmac.new(key.secret, payload, hashlib.sha256).digest()


def verify_frank_bytes(payload: bytes, tag: bytes, key: PlatformKey) -> bool:
    if len(tag) != TAG_LEN:
        return False
    return hmac.compare_digest(frank_bytes(payload, key), tag)


def canonical_json(obj: Any) -> bytes:
    """UTF-8 JSON with sorted keys and no insignificant whitespace."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode(
        "utf-8"
    )


def bundle_digest(rendered_views: Sequence[dict]) -> bytes:
    """SHA-256 over the concatenated canonical JSON of the ordered views."""
    h = hashlib.sha256()
    for view in rendered_views:
        h.update(canonical_json(view))
    return h.digest()


def _token_mac_input(digest: bytes, report_id: str, issued_at: int) -> bytes:
    rid = report_id.encode("utf-8")
    return digest + struct.pack(">I", len(rid)) + rid + struct.pack(">Q", issued_at)


@dataclass(frozen=True)
class AttestationToken:
    bundle_digest: bytes
    report_id: str
    issued_at: int
    key_id: str
    mac: bytes

    def to_json(self) -> dict[str, Any]:
        return {
            "bundle_digest": base64.b64encode(self.bundle_digest).decode("ascii"),
            "report_id": self.report_id,
            "issued_at": self.issued_at,
            "key_id": self.key_id,
            "mac": base64.b64encode(self.mac).decode("ascii"),
        }

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> "AttestationToken":
        try:
            return cls(
                bundle_digest=base64.b64decode(obj["bundle_digest"]),
                report_id=obj["report_id"],
                issued_at=int(obj["issued_at"]),
                key_id=obj["key_id"],
                mac=base64.b64decode(obj["mac"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed token: {exc}") from exc


def attest_bundle(
    rendered_views: Sequence[dict],
    report_id: str,
    key: PlatformKey,
    issued_at: int,
    sources: Iterable[tuple[str, bytes, bytes]] = (),
) -> AttestationToken:
    """Issue a token binding the rendered bundle to this report.

    ``sources`` are (item_id, canonical_bytes, stored_tag) triples for every
    item in the bundle; any triple whose tag fails verification refuses the
    attestation, naming the item.
    """
    for item_id, payload, tag in sources:
        if len(tag) != TAG_LEN or not hmac.compare_digest(
            hmac.new(key.secret, payload, hashlib.sha256).digest(), tag
        ):
            raise AttestationRefusedError(f"frank verification failed for {item_id}")
    digest = bundle_digest(rendered_views)
    mac = hmac.new(
        key.secret, _token_mac_input(digest, report_id, issued_at), hashlib.sha256
    ).digest()
    return AttestationToken(digest, report_id, issued_at, key.key_id, mac)


def verify_bundle(
    rendered_views: Sequence[dict], token: AttestationToken, keys: KeyStore
) -> bool:
    """True iff the token's MAC binds exactly this ordered rendering."""
    key = keys.get(token.key_id)
    if key is None:
        raise UnknownKeyError(f"no key with id {token.key_id!r}")
    digest = bundle_digest(rendered_views)
    if digest != token.bundle_digest:
        return False
    expected = hmac.new(
        key.secret,
        _token_mac_input(token.bundle_digest, token.report_id, token.issued_at),
        hashlib.sha256,
    ).digest()
    return hmac.compare_digest(expected, token.mac)


@dataclass(frozen=True)
class VerificationReport:
    mac_valid: bool
    pseudonymous: bool
    # (item ref, account id) in raw bundles; empty when pseudonymous
    attributions: tuple[tuple[str, str], ...] = ()
    # (item ref, pseudonym, role) in pseudonymous bundles
    anonymized_roles: tuple[tuple[str, str, str], ...] = ()

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "mac_valid": self.mac_valid,
            "pseudonymous": self.pseudonymous,
        }
        if self.pseudonymous:
            out["anonymized_roles"] = [
                {"ref": r, "pseudonym": p, "role": role}
                for r, p, role in self.anonymized_roles
            ]
        else:
            out["identity_attribution"] = [
                {"ref": r, "account_id": a} for r, a in self.attributions
            ]
        return out


def _item_ref(view: dict) -> str:
    return view.get("msg_ref") or view.get("seg_id") or "?"


def verify_forwarded(
    rendered_views: Sequence[dict], token: AttestationToken, keys: KeyStore
) -> VerificationReport:
    """Verify a forwarded bundle and attribute each item's sender.

    Attribution is by account identifier, never display name; when the
    bundle was rendered pseudonymously, verified role labels stand in for
    identifiers.
    """
    mac_valid = verify_bundle(rendered_views, token, keys)
    pseudonymous = any("sender_role" in v for v in rendered_views)
    if pseudonymous:
        roles = tuple(
            (_item_ref(v), v.get("sender") or v.get("speaker", "?"), v["sender_role"])
            for v in rendered_views
            if "sender_role" in v
        )
        return VerificationReport(mac_valid, True, anonymized_roles=roles)
    attributions = tuple(
        (_item_ref(v), v.get("sender") or v.get("speaker", "?")) for v in rendered_views
    )
    return VerificationReport(mac_valid, False, attributions=attributions)


def detect_impersonation(claimed: UserProfile, evidence_sender: AccountId) -> str:
    """"match" iff the claimed account is the evidence sender.

    Display names carry no authority: an account mimicking another's name
    still mismatches on identifier.
    """
    return "match" if claimed.account_id == evidence_sender else "mismatch"
