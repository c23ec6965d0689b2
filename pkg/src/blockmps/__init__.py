"""Block-sparse matrix product states with conserved particle number."""

__version__ = "0.1.0"
