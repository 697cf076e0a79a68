"""PC-NARX surrogates of stochastic dynamical systems."""

__version__ = "0.1.0"
