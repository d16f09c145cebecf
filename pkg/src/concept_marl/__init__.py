"""Concept-bottleneck policies for multi-agent RL in a tag game."""

__version__ = "0.1.0"
