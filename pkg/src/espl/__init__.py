"""Symbolic control policies learned by a sparsified symbolic network and SAC."""

__version__ = "0.1.0"
