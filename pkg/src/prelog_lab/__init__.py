"""Numerical lab for the pre-log lower bound of noncoherent correlated
block-fading SIMO channels."""

__version__ = "0.1.0"

SCHEMA = "prelog-lab/1"
