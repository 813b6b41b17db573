"""Sharp-penalty solver for monotone variational inequalities."""

__version__ = "1.0.0"
