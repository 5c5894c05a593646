"""Latent diffeomorphic dynamic mode decomposition: dynamics, maps and models."""
