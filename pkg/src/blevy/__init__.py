"""Monte Carlo and PDE laboratory for 1-d critical branching Lévy processes."""

__version__ = "0.1.0"
