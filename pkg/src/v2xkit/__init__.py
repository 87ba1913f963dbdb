"""Geometry, view-graph, conditioning and attention toolkit for synthetic
multi-agent driving scenes."""

from .errors import NumericError, V2XError, ValidationError

__version__ = "0.1.0"

__all__ = ["NumericError", "V2XError", "ValidationError", "__version__"]
