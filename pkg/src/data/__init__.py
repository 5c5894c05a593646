"""Time-series datasets: CSV ingestion, the synthetic latent-memory system, splits."""
