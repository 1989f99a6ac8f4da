"""Variation-time integrators and the flow solve driver."""
