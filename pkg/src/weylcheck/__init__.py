"""Curvature identities, mean-curvature bounds, and embedding reconstruction
for smooth convex hypersurfaces given by explicit analytic data."""

__version__ = "0.1.0"
