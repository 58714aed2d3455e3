"""fraver: numerical verification of averaging-operator bounds on fractal measures."""

__version__ = "0.1.0"
