"""Coordinate-invariant descriptors of motion and contact-force trajectories."""

__version__ = "0.1.0"
