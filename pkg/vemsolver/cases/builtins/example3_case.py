"""
Example 3: the Brachistochrone with free terminal time.

States (x, y, V), control u: x' = V sin u, y' = -V cos u, V' = g cos u,
g = 10. Start at rest at the origin, reach (2, -2) with free terminal
speed in minimum time (phi = tf, L = 0).
"""

import logging
from typing import Any, Dict

import numpy as np

from vemsolver.cases.base import BaseCase, BenchmarkCase, common_schema, zs_gains_from_config
from vemsolver.core.exceptions import ConfigError
from vemsolver.flows.zs_flow import FlowState, default_guess
from vemsolver.models.grid import Profile, TimeGrid
from vemsolver.models.problem_defs import Fixed, Free, OcpDerivatives, OcpProblem

# Configure logger
logger = logging.getLogger(__name__)

GRAVITY = 10.0
DEFAULT_N_POINTS = 101
INITIAL_TF = 1.0
REFERENCE_TF = 0.8165
GUESS_KINDS = ("ramp", "consistent")


def _f(x: np.ndarray, u: np.ndarray, t: np.ndarray) -> np.ndarray:
    V, s, c = x[:, 2], np.sin(u[:, 0]), np.cos(u[:, 0])
    return np.column_stack([V * s, -V * c, GRAVITY * c])


def _f_x(x: np.ndarray, u: np.ndarray, t: np.ndarray) -> np.ndarray:
    out = np.zeros((len(x), 3, 3))
    out[:, 0, 2] = np.sin(u[:, 0])
    out[:, 1, 2] = -np.cos(u[:, 0])
    return out


def _f_u(x: np.ndarray, u: np.ndarray, t: np.ndarray) -> np.ndarray:
    V, s, c = x[:, 2], np.sin(u[:, 0]), np.cos(u[:, 0])
    return np.stack([V * c, V * s, -GRAVITY * s], axis=1)[:, :, None]


def _f_xu(x: np.ndarray, u: np.ndarray, t: np.ndarray) -> np.ndarray:
    out = np.zeros((len(x), 3, 3, 1))
    out[:, 0, 2, 0] = np.cos(u[:, 0])
    out[:, 1, 2, 0] = np.sin(u[:, 0])
    return out


def _f_uu(x: np.ndarray, u: np.ndarray, t: np.ndarray) -> np.ndarray:
    V, s, c = x[:, 2], np.sin(u[:, 0]), np.cos(u[:, 0])
    return np.stack([-V * s, V * c, -GRAVITY * c], axis=1)[:, :, None, None]


def _derivatives() -> OcpDerivatives:
    zero = lambda *shape: (lambda *args: np.zeros(shape))  # noqa: E731
    return OcpDerivatives(
        f_x=_f_x,
        f_u=_f_u,
        f_t=zero(3),
        L_x=zero(3),
        L_u=zero(1),
        L_t=zero(),
        f_xx=zero(3, 3, 3),
        f_xu=_f_xu,
        f_uu=_f_uu,
        f_xt=zero(3, 3),
        f_ut=zero(3, 1),
        L_xx=zero(3, 3),
        L_xu=zero(3, 1),
        L_uu=zero(1, 1),
        L_xt=zero(3),
        L_ut=zero(1),
        phi_x=zero(3),
        phi_tf=lambda x, tf: 1.0,
        phi_xtf=zero(3),
        phi_tftf=zero(),
    )


def build_problem(initial_tf: float = INITIAL_TF) -> OcpProblem:
    return OcpProblem(
        n=3,
        m=1,
        f=_f,
        L=lambda x, u, t: np.zeros(len(x)),
        phi=lambda x, tf: tf,
        derivatives=_derivatives(),
        x0=(0.0, 0.0, 0.0),
        terminal_state=(Fixed(2.0), Fixed(-2.0), Free()),
        terminal_time=Free(initial_tf),
        name="example3",
    )


def ramp_guess(grid: TimeGrid) -> FlowState:
    """
    x = (1 - t, 1 - t, 0), lam = 0, u = 0 on the grid.

    The ramp does not start at the prescribed origin; pinned boundary
    values overwrite it when the flow is prepared.
    """
    t = grid.times
    ramp = 1.0 - t
    return FlowState(
        x=Profile(np.column_stack([ramp, ramp, np.zeros_like(t)]), label="x"),
        lam=Profile(np.zeros((grid.n_points, 3)), label="lam"),
        u=Profile(np.zeros((grid.n_points, 1)), label="u"),
        tf=grid.tf,
    )


def consistent_guess(grid: TimeGrid) -> FlowState:
    """x linear between the boundary values (V flat at 0), lam = 0, u = 0."""
    problem = build_problem(grid.tf)
    return FlowState.from_values(default_guess(problem, grid), problem.n, problem.m, tf=grid.tf)


class Example3Case(BaseCase):
    """Minimum-time benchmark with free terminal time and mixed terminal states."""

    def initialize(self) -> None:
        self.name = "example3"
        self.display_name = "Example 3"
        self.description = "Brachistochrone to (2, -2), free terminal speed and free terminal time"
        self.category = "optimal_control"
        self.tags = ["nonlinear", "free-tf", "minimum-time"]
        self.config_schema = common_schema(
            n_points=DEFAULT_N_POINTS,
            gains={"K": 1.0, "k_tf": 1.0, "convective": False},
            method="stiff",
            tau_max=400.0,
            snapshot_every=2.0,
        )
        self.config_schema["guess"] = {
            "type": "string",
            "description": "Initial guess: ramp or consistent",
            "default": "ramp",
        }
        self.config_schema["initial_tf"] = {
            "type": "number",
            "description": "Terminal time at tau = 0",
            "default": INITIAL_TF,
        }
        self.config_schema["boundary"] = {
            "type": "object",
            "description": "Boundary conditions (documentation only)",
            "default": {
                "start": [{"kind": "fixed", "value": 0.0}] * 3,
                "end": [{"kind": "fixed", "value": 2.0}, {"kind": "fixed", "value": -2.0}, {"kind": "free"}],
            },
        }
        self.has_config = True

    def build(self, config: Dict[str, Any]) -> BenchmarkCase:
        guess = config.get("guess", "ramp")
        if guess not in GUESS_KINDS:
            raise ConfigError(f"Unknown guess '{guess}' for {self.name}; expected one of {', '.join(GUESS_KINDS)}")
        return BenchmarkCase(
            name=self.name,
            problem=build_problem(float(config.get("initial_tf", INITIAL_TF))),
            reference=None,
            reference_tf=REFERENCE_TF,
            default_gains=zs_gains_from_config(config.get("gains", {})),
            default_guess=ramp_guess if guess == "ramp" else consistent_guess,
            default_n_points=int(config["n_points"]),
            default_method=config["method"],
            default_tau_max=float(config["tau_max"]),
            default_snapshot_every=float(config["snapshot_every"]),
            description=self.description,
        )


def example3() -> BenchmarkCase:
    """Example 3 with its shipped defaults: unit gains, N = 101, tf(0) = 1."""
    case = Example3Case()
    return case.build(case.get_default_config())
