"""Monte Carlo sampling of the probability space of quantum measurements."""

__version__ = "0.1.0"
