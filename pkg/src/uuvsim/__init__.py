"""Batched 6-DOF underwater-vehicle simulation and RL benchmark suite."""

__version__ = "0.1.0"
