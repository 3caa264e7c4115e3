"""amn: executable tooling for the Autonomy Model and Notation."""

__version__ = "0.1.0"
