"""
Example 2: a linear double integrator with fixed end states.

Minimize 1/2 integral of u^2 over [0, 2] subject to x1' = x2, x2' = u,
x(0) = (1, 1) and x(2) = (0, 0).
"""

import logging
from typing import Any, Dict

import numpy as np

from vemsolver.cases.base import BaseCase, BenchmarkCase, common_schema, zs_gains_from_config
from vemsolver.flows.zs_flow import FlowState
from vemsolver.models.grid import Profile, TimeGrid
from vemsolver.models.problem_defs import Fixed, OcpDerivatives, OcpProblem

# Configure logger
logger = logging.getLogger(__name__)

DEFAULT_N_POINTS = 41
TERMINAL_TIME = 2.0

A = np.array([[0.0, 1.0], [0.0, 0.0]])
B = np.array([[0.0], [1.0]])


def _f(x: np.ndarray, u: np.ndarray, t: np.ndarray) -> np.ndarray:
    return x @ A.T + u @ B.T


def _L(x: np.ndarray, u: np.ndarray, t: np.ndarray) -> np.ndarray:
    return 0.5 * u[:, 0] ** 2


def _derivatives() -> OcpDerivatives:
    zero = lambda *shape: (lambda *args: np.zeros(shape))  # noqa: E731
    return OcpDerivatives(
        f_x=lambda x, u, t: A,
        f_u=lambda x, u, t: B,
        f_t=zero(2),
        L_x=zero(2),
        L_u=lambda x, u, t: u,
        L_t=zero(),
        f_xx=zero(2, 2, 2),
        f_xu=zero(2, 2, 1),
        f_uu=zero(2, 1, 1),
        f_xt=zero(2, 2),
        f_ut=zero(2, 1),
        L_xx=zero(2, 2),
        L_xu=zero(2, 1),
        L_uu=lambda x, u, t: np.ones((1, 1)),
        L_xt=zero(2),
        L_ut=zero(1),
        phi_x=zero(2),
        phi_tf=zero(),
        phi_xtf=zero(2),
        phi_tftf=zero(),
    )


def reference(t: np.ndarray) -> np.ndarray:
    """Exact (x1, x2, lam1, lam2, u), shape (len(t), 5)."""
    t = np.asarray(t, dtype=float)
    return np.column_stack([
        0.5 * t ** 3 - 1.75 * t ** 2 + t + 1.0,
        1.5 * t ** 2 - 3.5 * t + 1.0,
        np.full_like(t, 3.0),
        -3.0 * t + 3.5,
        3.0 * t - 3.5,
    ])


def build_problem() -> OcpProblem:
    return OcpProblem(
        n=2,
        m=1,
        f=_f,
        L=_L,
        phi=lambda x, tf: 0.0,
        derivatives=_derivatives(),
        x0=(1.0, 1.0),
        terminal_state=(Fixed(0.0), Fixed(0.0)),
        terminal_time=Fixed(TERMINAL_TIME),
        name="example2",
    )


def _guess(grid: TimeGrid) -> FlowState:
    t = grid.times
    ramp = 1.0 - 0.5 * t
    return FlowState(
        x=Profile(np.column_stack([ramp, ramp]), label="x"),
        lam=Profile(np.zeros((grid.n_points, 2)), label="lam"),
        u=Profile(np.zeros((grid.n_points, 1)), label="u"),
    )


class Example2Case(BaseCase):
    """Linear-quadratic benchmark with fixed terminal time and state."""

    def initialize(self) -> None:
        self.name = "example2"
        self.display_name = "Example 2"
        self.description = "min 1/2 integral of u^2, x1' = x2, x2' = u, x(0) = (1, 1), x(2) = (0, 0)"
        self.category = "optimal_control"
        self.tags = ["linear-quadratic", "fixed-tf"]
        self.config_schema = common_schema(
            n_points=DEFAULT_N_POINTS,
            gains={"K": 1.0, "k_tf": 1.0, "convective": False},
            method="stiff",
            tau_max=300.0,
            snapshot_every=1.0,
        )
        self.config_schema["boundary"] = {
            "type": "object",
            "description": "Boundary conditions (documentation only)",
            "default": {
                "start": [{"kind": "fixed", "value": 1.0}, {"kind": "fixed", "value": 1.0}],
                "end": [{"kind": "fixed", "value": 0.0}, {"kind": "fixed", "value": 0.0}],
            },
        }
        self.has_config = True

    def build(self, config: Dict[str, Any]) -> BenchmarkCase:
        return BenchmarkCase(
            name=self.name,
            problem=build_problem(),
            reference=reference,
            reference_tf=None,
            default_gains=zs_gains_from_config(config.get("gains", {})),
            default_guess=_guess,
            default_n_points=int(config["n_points"]),
            default_method=config["method"],
            default_tau_max=float(config["tau_max"]),
            default_snapshot_every=float(config["snapshot_every"]),
            description=self.description,
        )


def example2() -> BenchmarkCase:
    """Example 2 with its shipped defaults: unit gains, N = 41, ramp guess."""
    case = Example2Case()
    return case.build(case.get_default_config())
