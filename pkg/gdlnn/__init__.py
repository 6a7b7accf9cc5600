"""GDLNN - graph classifiers built on mined graph-pattern programs."""

__version__ = "0.1.0"
