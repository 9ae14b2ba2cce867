"""Stand-in for the PyOD package (catalog-backed stubs)."""

__version__ = "2.0.5"
