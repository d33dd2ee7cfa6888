"""Brownian hard needles in two dimensions.

Particle-level simulation, the excluded-volume matrix T from the
Schwarz-Christoffel map, and solvers for the derived kinetic equation and
its homogeneous and fast-rotation reductions.
"""

__version__ = "0.1.0"
