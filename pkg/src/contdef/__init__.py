"""Leader-follower continuum deformation: weights, planning, simulation, safety."""

from __future__ import annotations

__version__ = "0.1.0"
