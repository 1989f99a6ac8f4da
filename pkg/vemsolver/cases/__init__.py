"""Benchmark cases and their registry."""
