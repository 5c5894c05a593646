"""LDDMD - Latent Diffeomorphic Dynamic Mode Decomposition

Learns interpretable latent dynamics with memory from time series: a block
rotation driven through an invertible coupling map, trained with a small
reverse-mode differentiation engine.
"""

__version__ = "0.1.0"
