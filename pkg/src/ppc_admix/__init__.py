"""Admixture model fitting and posterior predictive checks for diploid genotypes."""

__version__ = "0.1.0"
