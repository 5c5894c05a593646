"""Adam optimization, the training loop and checkpoint files."""
