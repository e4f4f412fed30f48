"""Command-line interface."""

from seqcal.cli.app import app

__all__ = ["app"]
