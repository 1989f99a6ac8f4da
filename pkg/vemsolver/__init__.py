"""
vemsolver package.

Variation evolving solver for calculus-of-variations problems and
indirect-form optimal control problems.
"""

__version__ = "0.1.0"
