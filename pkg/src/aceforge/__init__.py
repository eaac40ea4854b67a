"""Build LaTeX image/annotation datasets from source corpora and score document parsers."""

__version__ = "0.1.0"
