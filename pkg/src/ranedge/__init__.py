"""Deterministic RAN-edge negotiation sandbox."""

from __future__ import annotations

__version__ = "0.1.0"
