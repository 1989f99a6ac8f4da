"""Core configuration, settings and error types."""
