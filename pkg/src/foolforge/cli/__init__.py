"""Command-line interface and pipeline runner."""
