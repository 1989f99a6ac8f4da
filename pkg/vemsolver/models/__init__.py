"""Data models: time grids, profiles and problem definitions."""
