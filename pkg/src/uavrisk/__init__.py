"""Collision-risk assessment for road-user trajectories extracted from aerial video."""

__version__ = "0.1.0"
