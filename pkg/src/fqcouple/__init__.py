"""Analysis toolkit for spatially coupled LDPC ensembles over finite fields."""

__version__ = "0.1.0"
