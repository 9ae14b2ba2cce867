"""Stand-in for the PyGOD package (catalog-backed stubs)."""

__version__ = "1.1.0"
