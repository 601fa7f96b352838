"""Agent-based simulation of cough exposure around points of interest in a room."""

__version__ = "0.1.0"
