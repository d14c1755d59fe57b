"""Composite metamorphic relations for multi-component pipelines."""

__version__ = "0.1.0"
