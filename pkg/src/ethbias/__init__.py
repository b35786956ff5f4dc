"""Malicious-account detection toolkit for Ethereum-style ledgers."""

__version__ = "0.1.0"
