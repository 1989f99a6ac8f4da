"""
Calculus-of-variations flow.

Evolves the nodal values of y along variation time so that the integral
of F(y, ydot, t) decreases monotonically. Interior nodes move against the
Euler-Lagrange residual; free endpoints move against the boundary term
F_ydot; fixed endpoints never move. The sign variant replaces each driving
quantity by its sign (optionally smoothed by tanh(a / epsilon)) for
finite-time convergence.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from vemsolver.core.exceptions import DimensionError, UsageError
from vemsolver.flows.base import BaseFlow
from vemsolver.models.grid import Profile, TimeGrid, d1, d2, trapezoid
from vemsolver.models.problem_defs import VariationalProblem

# Configure logger
logger = logging.getLogger(__name__)

DEFAULT_SIGN_SMOOTHING = 1e-3


class CovVariant(str, Enum):
    """Flow variant."""

    ASYMPTOTIC = "asymptotic"
    SIGN = "sign"


@dataclass(frozen=True)
class CovGains:
    """
    Gains of the variational flow.

    Attributes:
        K (Sequence[float]): Diagonal gain per component; a scalar applies to all.
        variant (CovVariant): Asymptotic or sign (finite-time) variant.
        epsilon (float): tanh smoothing width of the sign variant; 0 gives the pure sign.
    """

    K: Union[float, Sequence[float]] = 1.0
    variant: CovVariant = CovVariant.ASYMPTOTIC
    epsilon: float = DEFAULT_SIGN_SMOOTHING

    def __post_init__(self):
        K = np.atleast_1d(np.asarray(self.K, dtype=float))
        if K.ndim != 1 or not np.all(K > 0) or not np.all(np.isfinite(K)):
            raise ValueError(f"Gains K must be positive, got {self.K}")
        if self.epsilon < 0:
            raise ValueError(f"Sign smoothing must be non-negative, got {self.epsilon}")
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "variant", CovVariant(self.variant))

    def diagonal(self, n: int) -> np.ndarray:
        if self.K.size == 1:
            return np.full(n, float(self.K[0]))
        if self.K.size != n:
            raise DimensionError(f"Expected {n} gains, got {self.K.size}")
        return self.K

    def shape(self, values: np.ndarray) -> np.ndarray:
        """Apply the variant's shaping function to a driving quantity."""
        if self.variant is CovVariant.ASYMPTOTIC:
            return values
        if self.epsilon == 0.0:
            return np.sign(values)
        return np.tanh(values / self.epsilon)


def _values(problem: VariationalProblem, y: Union[Profile, np.ndarray], grid: TimeGrid) -> np.ndarray:
    values = y.values if isinstance(y, Profile) else np.asarray(y, dtype=float)
    if values.shape != (grid.n_points, problem.n):
        raise DimensionError(f"Profile shape {values.shape} does not match ({grid.n_points}, {problem.n})")
    return values


def _el_terms(problem: VariationalProblem, values: np.ndarray, grid: TimeGrid) -> Tuple[np.ndarray, np.ndarray]:
    h, t = grid.h, grid.times
    ydot = d1(values, h)
    F_ydot = problem.F_ydot(values, ydot, t)
    residual = problem.F_y(values, ydot, t) - d1(F_ydot, h)
    return residual, F_ydot


def euler_lagrange_residual(problem: VariationalProblem, y: Union[Profile, np.ndarray], grid: TimeGrid) -> Profile:
    """
    Euler-Lagrange residual F_y - d/dt F_ydot at every node.

    The time derivative is taken by differentiating the nodal samples of
    F_ydot, so only first partials of F are needed.

    Raises:
        EvaluationError: If a partial is non-finite; the error names the node.
    """
    residual, _ = _el_terms(problem, _values(problem, y, grid), grid)
    return Profile(residual, label="el_residual")


def euler_lagrange_residual_chain_rule(
    problem: VariationalProblem, y: Union[Profile, np.ndarray], grid: TimeGrid
) -> Profile:
    """
    Euler-Lagrange residual with d/dt F_ydot expanded by the chain rule.

    Cross-check path: F_y - (F_ydot_y ydot + F_ydot_ydot yddot + F_ydot_t).

    Raises:
        UsageError: If the problem does not supply the partials of F_ydot.
    """
    if not problem.has_chain_rule_partials:
        raise UsageError(f"Problem {problem.name} has no F_ydot partials for the chain-rule residual")
    values = _values(problem, y, grid)
    h, t = grid.h, grid.times
    ydot, yddot = d1(values, h), d2(values, h)
    total = (
        np.einsum("nij,nj->ni", problem.F_ydot_y(values, ydot, t), ydot)
        + np.einsum("nij,nj->ni", problem.F_ydot_ydot(values, ydot, t), yddot)
        + problem.F_ydot_t(values, ydot, t)
    )
    return Profile(problem.F_y(values, ydot, t) - total, label="el_residual")


def _cov_rates(problem: VariationalProblem, values: np.ndarray, grid: TimeGrid, gains: CovGains) -> np.ndarray:
    K = gains.diagonal(problem.n)
    residual, F_ydot = _el_terms(problem, values, grid)
    rates = -K * gains.shape(residual)

    boundary = problem.boundary
    start_free = ~boundary.fixed_mask(end=False)
    end_free = ~boundary.fixed_mask(end=True)
    rates[0] = np.where(start_free, K * gains.shape(F_ydot[0]), 0.0)
    rates[-1] = np.where(end_free, -K * gains.shape(F_ydot[-1]), 0.0)
    return rates


def cov_rhs(problem: VariationalProblem, y: Union[Profile, np.ndarray], grid: TimeGrid, gains: CovGains) -> Profile:
    """
    Variation rate of every nodal value.

    Interior nodes: -K (EL residual). Free start: +K F_ydot. Free end:
    -K F_ydot. Fixed ends: 0. In the sign variant each driving quantity
    passes through sign(.) or tanh(./epsilon) first.

    Args:
        problem (VariationalProblem): The problem.
        y (Profile): Current nodal values.
        grid (TimeGrid): The grid.
        gains (CovGains): Gain settings.

    Returns:
        Profile: Rates with the same shape as y.
    """
    return Profile(_cov_rates(problem, _values(problem, y, grid), grid, gains), label="rate")


def functional_J(problem: VariationalProblem, y: Union[Profile, np.ndarray], grid: TimeGrid) -> float:
    """Trapezoid value of the integral of F along the profile."""
    values = _values(problem, y, grid)
    integrand = problem.F(values, d1(values, grid.h), grid.times)
    return trapezoid(grid, Profile(integrand, label="F"))


class CovFlow(BaseFlow):
    """Semi-discretized flow for a VariationalProblem."""

    monitored = "J"

    def __init__(self, problem: VariationalProblem, grid: TimeGrid, gains: CovGains):
        super().__init__(problem, grid, gains)
        self.K = gains.diagonal(problem.n)
        self.component_names = [f"y{i + 1}" for i in range(problem.n)]

    def pinned_mask(self) -> np.ndarray:
        mask = np.zeros((self.grid.n_points, self.problem.n), dtype=bool)
        mask[0] = self.problem.boundary.fixed_mask(end=False)
        mask[-1] = self.problem.boundary.fixed_mask(end=True)
        return mask

    def apply_pins(self, values: np.ndarray, tf: Optional[float]) -> np.ndarray:
        out = np.array(values, dtype=float, copy=True)
        boundary = self.problem.boundary
        for row, end in ((0, False), (-1, True)):
            mask = boundary.fixed_mask(end)
            out[row, mask] = boundary.fixed_values(end)[mask]
        return out

    def nodal_rates(self, values: np.ndarray, tf: Optional[float]) -> Tuple[np.ndarray, Optional[float]]:
        return _cov_rates(self.problem, values, self.grid, self.gains), None

    def functional(self, values: np.ndarray, tf: Optional[float]) -> float:
        return functional_J(self.problem, values, self.grid)

    def residual_norm(self, values: np.ndarray, tf: Optional[float]) -> float:
        residual, F_ydot = _el_terms(self.problem, values, self.grid)
        norm = float(np.abs(residual[1:-1]).max())
        boundary = self.problem.boundary
        for row, end in ((0, False), (-1, True)):
            free = ~boundary.fixed_mask(end)
            if np.any(free):
                norm = max(norm, float(np.abs(F_ydot[row, free]).max()))
        return norm

    def rate_scale(self) -> np.ndarray:
        return self.K
