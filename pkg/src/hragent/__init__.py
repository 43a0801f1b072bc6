"""Confidential, local-first schema-guided dialogue engine for HR tasks."""

__version__ = "0.1.0"
