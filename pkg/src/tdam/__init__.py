"""Multiple-instance survival modeling and downstream survival statistics."""

__version__ = "0.1.0"
