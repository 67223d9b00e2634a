"""Numerical toolkit for measure-geometric Krein-Feller operators on the torus."""

__version__ = "0.1.0"
