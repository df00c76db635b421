"""Hybrid quantum-classical double DQN for kinematic robot navigation."""

__version__ = "0.1.0"
