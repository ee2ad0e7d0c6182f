"""Extrinsic-geometry verification toolkit for foliated Randers spaces."""

__version__ = "0.1.0"
