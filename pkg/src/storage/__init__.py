"""Configuration records and report types."""
