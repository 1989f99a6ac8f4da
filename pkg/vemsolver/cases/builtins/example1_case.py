"""
Example 1: a scalar calculus-of-variations problem.

Minimize the integral of ydot^2 - 2 y cos t over [0, pi] with
y(0) = y(pi) = 0. The extremal is y = cos t + (2/pi) t - 1.
"""

import logging
import math
from typing import Any, Dict

import numpy as np

from vemsolver.cases.base import BaseCase, BenchmarkCase, common_schema, cov_gains_from_config
from vemsolver.models.grid import Profile, TimeGrid
from vemsolver.models.problem_defs import BoundarySpec, Fixed, VariationalProblem

# Configure logger
logger = logging.getLogger(__name__)

DEFAULT_N_POINTS = 101
DEFAULT_GAIN = 0.1


def _F(y: np.ndarray, ydot: np.ndarray, t: np.ndarray) -> np.ndarray:
    return ydot[:, 0] ** 2 - 2.0 * y[:, 0] * np.cos(t)


def _F_y(y: np.ndarray, ydot: np.ndarray, t: np.ndarray) -> np.ndarray:
    return -2.0 * np.cos(t)[:, None]


def _F_ydot(y: np.ndarray, ydot: np.ndarray, t: np.ndarray) -> np.ndarray:
    return 2.0 * ydot


def reference(t: np.ndarray) -> np.ndarray:
    """Exact extremal, shape (len(t), 1)."""
    t = np.asarray(t, dtype=float)
    return (np.cos(t) + 2.0 * t / math.pi - 1.0)[:, None]


def build_problem() -> VariationalProblem:
    return VariationalProblem(
        n=1,
        F=_F,
        F_y=_F_y,
        F_ydot=_F_ydot,
        boundary=BoundarySpec(start=(Fixed(0.0),), end=(Fixed(0.0),)),
        t0=0.0,
        tf=math.pi,
        name="example1",
        F_ydot_y=lambda y, ydot, t: 0.0,
        F_ydot_ydot=lambda y, ydot, t: 2.0,
        F_ydot_t=lambda y, ydot, t: 0.0,
    )


def _zero_guess(grid: TimeGrid) -> Profile:
    return Profile(np.zeros((grid.n_points, 1)), label="y")


class Example1Case(BaseCase):
    """Scalar variational benchmark with both ends fixed."""

    def initialize(self) -> None:
        self.name = "example1"
        self.display_name = "Example 1"
        self.description = "min integral of ydot^2 - 2 y cos t on [0, pi], y(0) = y(pi) = 0"
        self.category = "variational"
        self.tags = ["calculus-of-variations", "fixed-ends"]
        self.config_schema = common_schema(
            n_points=DEFAULT_N_POINTS,
            gains={"K": DEFAULT_GAIN, "variant": "asymptotic", "epsilon": 1e-3},
            method="rk45",
            tau_max=50.0,
            snapshot_every=0.5,
        )
        self.config_schema["boundary"] = {
            "type": "object",
            "description": "Boundary conditions (documentation only)",
            "default": {"start": [{"kind": "fixed", "value": 0.0}], "end": [{"kind": "fixed", "value": 0.0}]},
        }
        self.has_config = True

    def build(self, config: Dict[str, Any]) -> BenchmarkCase:
        return BenchmarkCase(
            name=self.name,
            problem=build_problem(),
            reference=reference,
            reference_tf=None,
            default_gains=cov_gains_from_config(config.get("gains", {})),
            default_guess=_zero_guess,
            default_n_points=int(config["n_points"]),
            default_method=config["method"],
            default_tau_max=float(config["tau_max"]),
            default_snapshot_every=float(config["snapshot_every"]),
            description=self.description,
        )


def example1() -> BenchmarkCase:
    """Example 1 with its shipped defaults: K = 0.1, N = 101, zero guess."""
    case = Example1Case()
    return case.build(case.get_default_config())
