"""Token attributions, dictionary categories and their significance for AD transcript classification."""

__version__ = "0.1.0"
