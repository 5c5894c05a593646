"""Reverse-mode differentiation engine."""
