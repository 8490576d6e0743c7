"""Bit-insertion steganographic codec keyed by transcendental digit streams,
with a password store, a challenge-response login and an attack harness."""

__version__ = "0.1.0"
