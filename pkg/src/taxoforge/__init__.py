"""taxoforge: build labeled image datasets from a taxonomy API and image crawls."""

__version__ = "0.1.0"
