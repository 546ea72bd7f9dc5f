"""Sieved multiplicative data, prime-factor duality identities and their asymptotics."""

__version__ = "0.1.0"
