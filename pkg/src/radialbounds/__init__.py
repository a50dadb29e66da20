"""Spectral, exit-time and mean-curvature bounds from radial curvature profiles."""

__version__ = "0.1.0"
