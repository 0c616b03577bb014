"""Poisson matching lemma toolkit."""

__version__ = "0.1.0"
