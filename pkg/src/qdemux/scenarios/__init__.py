"""Bundled scenario files (``*.cfg``)."""
