"""Wind-aware path planning for fixed-wing aircraft over terrain."""

__version__ = "0.1.0"
