"""Distributed load frequency control with multi-agent deep RL."""

__version__ = "0.1.0"
