"""Reporting-workflow engine: user-controlled evidence disclosure, platform
attestation, auditable moderation protocols, and an abuse harness."""

__version__ = "0.1.0"
