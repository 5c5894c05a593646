"""Test suite for LDDMD."""
