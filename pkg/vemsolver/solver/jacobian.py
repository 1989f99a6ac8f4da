"""
Finite-difference flow Jacobian.

The implicit stepper needs the Jacobian of the flow right-hand side with
respect to the integrated vector. It is built by forward differences, kept
as a sparse CSC matrix when most entries are exact zeros (finite-difference
stencils only couple neighbouring nodes) and factored as I - c J.
"""

import logging
from typing import Callable, Optional

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
from scipy.sparse import linalg as spla

# Configure logger
logger = logging.getLogger(__name__)

SQRT_EPS = float(np.sqrt(np.finfo(float).eps))


class IterationMatrix:
    """LU factors of I - c J with a uniform solve interface."""

    def __init__(self, jacobian: "FlowJacobian", c: float):
        self.c = c
        size = jacobian.size
        if jacobian.is_sparse:
            matrix = sp.identity(size, format="csc") - c * jacobian.matrix
            self._lu = spla.splu(sp.csc_matrix(matrix))
            self._sparse = True
        else:
            matrix = np.eye(size) - c * jacobian.matrix
            self._lu = la.lu_factor(matrix, check_finite=False)
            self._sparse = False

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        if self._sparse:
            return self._lu.solve(rhs)
        return la.lu_solve(self._lu, rhs, check_finite=False)


class FlowJacobian:
    """
    Cached finite-difference Jacobian of an autonomous right-hand side.

    Attributes:
        rhs (Callable): Right-hand side f(tau, y).
        matrix: Dense ndarray or scipy.sparse CSC matrix, None until computed.
        is_sparse (bool): Whether ``matrix`` is sparse.
        evaluations (int): Number of Jacobian builds.
        age (int): Accepted steps since the last build.
    """

    def __init__(self, rhs: Callable[[float, np.ndarray], np.ndarray], sparse_density: float = 0.25,
                 sparse_min_size: int = 64):
        self.rhs = rhs
        self.sparse_density = sparse_density
        self.sparse_min_size = sparse_min_size
        self.matrix = None
        self.is_sparse = False
        self.size = 0
        self.evaluations = 0
        self.age = 0
        self._factor: Optional[IterationMatrix] = None

    @property
    def available(self) -> bool:
        return self.matrix is not None

    def compute(self, tau: float, y: np.ndarray, f0: Optional[np.ndarray] = None) -> None:
        """Rebuild the Jacobian at (tau, y) by forward differences."""
        y = np.asarray(y, dtype=float)
        if f0 is None:
            f0 = self.rhs(tau, y)
        size = y.size
        dense = np.empty((size, size))
        for j in range(size):
            delta = SQRT_EPS * max(abs(y[j]), 1.0)
            shifted = y.copy()
            shifted[j] += delta
            dense[:, j] = (self.rhs(tau, shifted) - f0) / delta

        self.size = size
        density = np.count_nonzero(dense) / float(size * size)
        if size >= self.sparse_min_size and density <= self.sparse_density:
            self.matrix = sp.csc_matrix(dense)
            self.is_sparse = True
        else:
            self.matrix = dense
            self.is_sparse = False
        self.evaluations += 1
        self.age = 0
        self._factor = None
        logger.debug(f"Jacobian rebuilt: size={size}, density={density:.3f}, sparse={self.is_sparse}")

    def factor(self, c: float) -> IterationMatrix:
        """LU factors of I - c J, reused while c and the Jacobian are unchanged."""
        if self._factor is None or self._factor.c != c:
            self._factor = IterationMatrix(self, c)
        return self._factor

    def apply(self, vector: np.ndarray) -> np.ndarray:
        return self.matrix @ vector
