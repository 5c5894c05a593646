"""Observability components for logging and tracing."""
