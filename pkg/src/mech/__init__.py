"""Geometric mechanics on tangent bundles: symbolic forms, Noether symmetries,
constraint chains, connections and controllability."""

__version__ = "0.1.0"
