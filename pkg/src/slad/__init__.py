"""Sub-path linear approximation distillation on toy data."""
