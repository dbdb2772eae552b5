"""Anaphor-assisted document-level relation extraction on a numpy autograd substrate."""

__version__ = "0.1.0"
