"""
Time grid and nodal profiles.

A TimeGrid holds N uniformly spaced nodes on the normalized interval
sigma in [0, 1]. Physical times are t0 + sigma * (tf - t0), so a solve
with free terminal time stretches the grid by moving tf alone; every
derivative picks up the new spacing through h.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.integrate import trapezoid as _trapezoid

from vemsolver.core.exceptions import DimensionError, EvaluationError, InvalidGridError

# Configure logger
logger = logging.getLogger(__name__)

MIN_POINTS = 5


@dataclass
class TimeGrid:
    """
    Uniform grid attached to normalized positions.

    Attributes:
        t0 (float): Initial time.
        tf (float): Terminal time. Mutated only by the solve loop that owns the grid.
        n_points (int): Number of nodes N.
    """

    t0: float
    tf: float
    n_points: int

    @property
    def sigma(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n_points)

    @property
    def span(self) -> float:
        return self.tf - self.t0

    @property
    def h(self) -> float:
        return (self.tf - self.t0) / (self.n_points - 1)

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.sigma * (self.tf - self.t0)

    def weights(self) -> np.ndarray:
        """Composite trapezoid weights w_i for the current spacing."""
        return trapezoid_weights(self.n_points, self.h)

    def copy(self, tf: Optional[float] = None) -> "TimeGrid":
        """Return an independent grid, optionally with a different terminal time."""
        return TimeGrid(self.t0, self.tf if tf is None else tf, self.n_points)


@dataclass
class Profile:
    """
    Values of an n-vector variable at every grid node.

    Attributes:
        values (np.ndarray): N x dim array of samples. A 1-D array is read as a
            single component.
        label (str): Variable-group name used in output headers.
    """

    values: np.ndarray
    label: str = "y"

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2:
            raise DimensionError(f"Profile '{self.label}' must be 2-D, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            bad = int(np.argwhere(~np.isfinite(values))[0][0])
            raise EvaluationError(f"Profile '{self.label}' holds non-finite samples", node=bad)
        self.values = values

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def n_points(self) -> int:
        return self.values.shape[0]

    def component(self, index: int) -> np.ndarray:
        return self.values[:, index]


def make_grid(t0: float, tf: float, n_points: int) -> TimeGrid:
    """
    Build a uniform time grid.

    Args:
        t0 (float): Initial time.
        tf (float): Terminal time, strictly greater than t0.
        n_points (int): Number of nodes, at least 5.

    Returns:
        TimeGrid: The grid with h = (tf - t0) / (N - 1).

    Raises:
        InvalidGridError: If the interval is not increasing or N < 5.
    """
    if not (np.isfinite(t0) and np.isfinite(tf)) or tf <= t0:
        raise InvalidGridError(f"Grid interval must be increasing, got [{t0}, {tf}]")
    if int(n_points) != n_points or n_points < MIN_POINTS:
        raise InvalidGridError(f"Grid needs at least {MIN_POINTS} points, got {n_points}")
    return TimeGrid(float(t0), float(tf), int(n_points))


def trapezoid_weights(n_points: int, h: float) -> np.ndarray:
    weights = np.full(n_points, h)
    weights[0] = weights[-1] = 0.5 * h
    return weights


def d1(values: np.ndarray, h: float) -> np.ndarray:
    """
    First derivative along axis 0, second order everywhere.

    Central differences inside, three-point one-sided stencils at both ends.
    Trailing axes are carried along untouched.
    """
    out = np.empty_like(values, dtype=float)
    out[1:-1] = (values[2:] - values[:-2]) / (2.0 * h)
    out[0] = (-3.0 * values[0] + 4.0 * values[1] - values[2]) / (2.0 * h)
    out[-1] = (3.0 * values[-1] - 4.0 * values[-2] + values[-3]) / (2.0 * h)
    return out


def d1_transpose(values: np.ndarray, h: float) -> np.ndarray:
    """
    Apply the transpose of the ``d1`` operator along axis 0.

    Used to pull sensitivities with respect to derivative samples back
    onto the nodal values, end stencils included.
    """
    q = np.asarray(values, dtype=float) / (2.0 * h)
    out = np.zeros_like(q)
    out[2:] += q[1:-1]
    out[:-2] -= q[1:-1]
    out[0] -= 3.0 * q[0]
    out[1] += 4.0 * q[0]
    out[2] -= q[0]
    out[-1] += 3.0 * q[-1]
    out[-2] -= 4.0 * q[-1]
    out[-3] += q[-1]
    return out


def d2(values: np.ndarray, h: float) -> np.ndarray:
    """Second derivative along axis 0; four-point one-sided stencils at the ends."""
    out = np.empty_like(values, dtype=float)
    h2 = h * h
    out[1:-1] = (values[2:] - 2.0 * values[1:-1] + values[:-2]) / h2
    out[0] = (2.0 * values[0] - 5.0 * values[1] + 4.0 * values[2] - values[3]) / h2
    out[-1] = (2.0 * values[-1] - 5.0 * values[-2] + 4.0 * values[-3] - values[-4]) / h2
    return out


def _check(grid: TimeGrid, profile: Profile) -> None:
    if profile.n_points != grid.n_points:
        raise DimensionError(
            f"Profile '{profile.label}' has {profile.n_points} rows, grid has {grid.n_points} nodes"
        )


def diff1(grid: TimeGrid, profile: Profile) -> Profile:
    """
    Differentiate a profile once with respect to t.

    Args:
        grid (TimeGrid): Grid the profile lives on.
        profile (Profile): Nodal samples.

    Returns:
        Profile: d/dt of the samples, labelled '<label>_dot'.

    Raises:
        DimensionError: If the profile does not match the grid.
    """
    _check(grid, profile)
    return Profile(d1(profile.values, grid.h), label=f"{profile.label}_dot")


def diff2(grid: TimeGrid, profile: Profile) -> Profile:
    """
    Differentiate a profile twice with respect to t.

    Raises:
        DimensionError: If the profile does not match the grid.
    """
    _check(grid, profile)
    return Profile(d2(profile.values, grid.h), label=f"{profile.label}_ddot")


def trapezoid(grid: TimeGrid, integrand: Profile) -> float:
    """
    Integrate a scalar profile over [t0, tf] with the composite trapezoid rule.

    Raises:
        DimensionError: If the integrand has more than one component or
            does not match the grid.
    """
    _check(grid, integrand)
    if integrand.dim != 1:
        raise DimensionError(f"Trapezoid integrand must be scalar, got dim {integrand.dim}")
    return float(_trapezoid(integrand.values[:, 0], dx=grid.h))
