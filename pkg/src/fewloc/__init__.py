"""One-shot object localization from a single exemplar box."""

__version__ = "0.1.0"
