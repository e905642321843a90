"""Retrieval-augmented security review of code snippets using community Q&A comments."""

__version__ = "0.1.0"
