"""occamlab - Simulate where MAP, MDL and Bayes classification go wrong."""

__version__ = "1.0.0"
