"""Primitive-based 3D shape abstraction from single depth images with graph reasoning."""

__version__ = "0.1.0"
