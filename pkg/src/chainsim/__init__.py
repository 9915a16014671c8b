"""Deterministic Nakamoto-consensus simulator and SPV verification library."""

__version__ = "0.1.0"
