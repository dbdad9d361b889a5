"""Differential kinematics toolkit: phase-space mechanics, forms, image-flow analysis."""

__version__ = "0.1.0"
