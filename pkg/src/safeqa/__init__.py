"""Staged QA engine: sanitize, guard, retrieve-or-generate, escalate, learn."""

__version__ = "0.1.0"
