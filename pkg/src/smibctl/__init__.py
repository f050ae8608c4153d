"""Control design and simulation of a single-machine infinite-bus power system."""

__version__ = "0.1.0"
