"""Variation flows: nodal rate assembly for both problem families."""
