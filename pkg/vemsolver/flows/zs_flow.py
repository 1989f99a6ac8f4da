"""
Optimal control flow.

Evolves stacked state, costate and control profiles y = [x; lam; u] (and
the terminal time when it is free) so that the sum-of-squares functional

    J1 = integral of |xdot - f|^2 + |lamdot + H_x|^2 + |H_u|^2
         [+ (H(tf) + phi_tf)^2 when tf is free]

decreases to zero. Its unique zero is the first-order optimality system
of the Bolza problem, with H = L + lam^T f.

The nodal rates are the exact gradient of the trapezoid-discretized J1,
scaled entry by entry with positive factors, so the discrete functional
never increases along the flow. Away from the ends the factor is K / w_i
and the rate is -2K times the discrete counterpart of

    r = H_yy v + M ydot + [f_t; -H_xt; 0] - [xddot; lamddot; 0]

with v = [H_x + lamdot; f - xdot; H_u] the optimality vector. State and
costate rows within reach of the one-sided end stencils use the factor K
itself; there the per-weight gradient carries the stencil mismatch and
would only vanish to first order at an exact solution.
"""

import logging
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.integrate import trapezoid as _trapezoid

from vemsolver.core.exceptions import DimensionError, UsageError
from vemsolver.flows.base import BaseFlow
from vemsolver.models.grid import Profile, TimeGrid, d1, d1_transpose, trapezoid_weights
from vemsolver.models.problem_defs import OcpProblem

# Configure logger
logger = logging.getLogger(__name__)

# state and costate rows this close to either end see the one-sided d1 stencils
ONE_SIDED_REACH = 3


@dataclass
class HamiltonianBundle:
    """
    Hamiltonian and its partials at one or more points.

    Arrays carry a leading node axis when the bundle was built from
    profiles, and none when it was built from a single point.
    """

    H: np.ndarray
    H_x: np.ndarray
    f: np.ndarray
    H_u: np.ndarray
    H_t: np.ndarray
    f_x: np.ndarray
    f_u: np.ndarray
    f_t: np.ndarray
    H_xx: np.ndarray
    H_xu: np.ndarray
    H_uu: np.ndarray
    H_xt: np.ndarray
    H_ut: np.ndarray
    L: np.ndarray

    @property
    def H_lam(self) -> np.ndarray:
        return self.f

    @property
    def n(self) -> int:
        return self.f.shape[-1]

    @property
    def m(self) -> int:
        return self.H_u.shape[-1]


@dataclass
class ZsGains:
    """
    Gains of the optimal control flow.

    Attributes:
        K (Union[float, Sequence[float]]): Diagonal gain for the 2n+m stacked
            components; a scalar applies to all.
        k_tf (float): Gain of the terminal-time rate.
        convective (bool): Add the grid-stretching correction at interior nodes.
    """

    K: Union[float, Sequence[float]] = 1.0
    k_tf: float = 1.0
    convective: bool = False

    def __post_init__(self):
        K = np.atleast_1d(np.asarray(self.K, dtype=float))
        if K.ndim != 1 or not np.all(K > 0) or not np.all(np.isfinite(K)):
            raise ValueError(f"Gains K must be positive, got {self.K}")
        if not self.k_tf > 0:
            raise ValueError(f"Gain k_tf must be positive, got {self.k_tf}")
        self.K = K

    def diagonal(self, width: int) -> np.ndarray:
        if self.K.size == 1:
            return np.full(width, float(self.K[0]))
        if self.K.size != width:
            raise DimensionError(f"Expected {width} gains, got {self.K.size}")
        return self.K


@dataclass
class FlowState:
    """
    Stacked state of the optimal control flow.

    Attributes:
        x (Profile): State profile, n components.
        lam (Profile): Costate profile, n components.
        u (Profile): Control profile, m components.
        tf (Optional[float]): Terminal time when it is free.
    """

    x: Profile
    lam: Profile
    u: Profile
    tf: Optional[float] = None

    def __post_init__(self):
        rows = {self.x.n_points, self.lam.n_points, self.u.n_points}
        if len(rows) != 1:
            raise DimensionError(f"x, lam and u must share one grid, got row counts {sorted(rows)}")
        if self.x.dim != self.lam.dim:
            raise DimensionError(f"x has {self.x.dim} components but lam has {self.lam.dim}")

    @property
    def values(self) -> np.ndarray:
        return np.hstack([self.x.values, self.lam.values, self.u.values])

    @classmethod
    def from_values(cls, values: np.ndarray, n: int, m: int, tf: Optional[float] = None) -> "FlowState":
        values = np.asarray(values, dtype=float)
        if values.ndim != 2 or values.shape[1] != 2 * n + m:
            raise DimensionError(f"Stacked values need {2 * n + m} columns, got shape {values.shape}")
        return cls(
            x=Profile(values[:, :n], label="x"),
            lam=Profile(values[:, n:2 * n], label="lam"),
            u=Profile(values[:, 2 * n:], label="u"),
            tf=tf,
        )


class RParts(NamedTuple):
    """Partition of r into its state, costate and control rows."""

    x: np.ndarray
    lam: np.ndarray
    u: np.ndarray

    @property
    def stacked(self) -> np.ndarray:
        return np.concatenate([self.x, self.lam, self.u], axis=-1)


# ---------------------------------------------------------------------------
# Pointwise assembly
# ---------------------------------------------------------------------------


def hamiltonian_bundle(
    problem: OcpProblem,
    x: np.ndarray,
    lam: np.ndarray,
    u: np.ndarray,
    t: Union[float, np.ndarray],
) -> HamiltonianBundle:
    """
    Evaluate H = L + lam^T f and the partials the flow needs.

    Accepts a single point (x of shape (n,)) or whole profiles (x of
    shape (N, n) with t of shape (N,)).

    Raises:
        EvaluationError: If the problem callables return non-finite values.
    """
    single = np.ndim(x) == 1
    x = np.atleast_2d(np.asarray(x, dtype=float))
    lam = np.atleast_2d(np.asarray(lam, dtype=float))
    u = np.atleast_2d(np.asarray(u, dtype=float))
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if x.shape != lam.shape:
        raise DimensionError(f"x {x.shape} and lam {lam.shape} disagree")
    d = problem.derivatives

    f = problem.f(x, u, t)
    L = problem.L(x, u, t)
    f_x, f_u, f_t = d.f_x(x, u, t), d.f_u(x, u, t), d.f_t(x, u, t)
    f_xx, f_xu, f_uu = d.f_xx(x, u, t), d.f_xu(x, u, t), d.f_uu(x, u, t)
    f_xt, f_ut = d.f_xt(x, u, t), d.f_ut(x, u, t)

    bundle = HamiltonianBundle(
        H=L + np.einsum("nk,nk->n", lam, f),
        H_x=d.L_x(x, u, t) + np.einsum("nki,nk->ni", f_x, lam),
        f=f,
        H_u=d.L_u(x, u, t) + np.einsum("nka,nk->na", f_u, lam),
        H_t=d.L_t(x, u, t) + np.einsum("nk,nk->n", f_t, lam),
        f_x=f_x,
        f_u=f_u,
        f_t=f_t,
        H_xx=d.L_xx(x, u, t) + np.einsum("nkij,nk->nij", f_xx, lam),
        H_xu=d.L_xu(x, u, t) + np.einsum("nkia,nk->nia", f_xu, lam),
        H_uu=d.L_uu(x, u, t) + np.einsum("nkab,nk->nab", f_uu, lam),
        H_xt=d.L_xt(x, u, t) + np.einsum("nki,nk->ni", f_xt, lam),
        H_ut=d.L_ut(x, u, t) + np.einsum("nka,nk->na", f_ut, lam),
        L=L,
    )
    if single:
        bundle = HamiltonianBundle(**{k: v[0] for k, v in vars(bundle).items()})
    return bundle


def optimality_vector(bundle: HamiltonianBundle, xdot: np.ndarray, lamdot: np.ndarray) -> np.ndarray:
    """Stack v = [H_x + lamdot; f - xdot; H_u] along the last axis."""
    return np.concatenate([bundle.H_x + lamdot, bundle.f - xdot, bundle.H_u], axis=-1)


def hessian_matrix(bundle: HamiltonianBundle) -> np.ndarray:
    """H_yy = [[H_xx, f_x^T, H_xu], [f_x, 0, f_u], [H_ux, f_u^T, H_uu]]."""
    f_x, f_u = bundle.f_x, bundle.f_u
    swap = lambda a: np.swapaxes(a, -1, -2)  # noqa: E731
    zeros_nn = np.zeros_like(f_x)
    return np.block([
        [bundle.H_xx, swap(f_x), bundle.H_xu],
        [f_x, zeros_nn, f_u],
        [swap(bundle.H_xu), swap(f_u), bundle.H_uu],
    ])


def m_matrix(bundle: HamiltonianBundle) -> np.ndarray:
    """M = [[f_x, 0, f_u], [-H_xx, -f_x^T, -H_xu], [0, 0, 0]]."""
    f_x, f_u = bundle.f_x, bundle.f_u
    lead = f_x.shape[:-2]
    n, m = bundle.n, bundle.m
    zeros_nn = np.zeros_like(f_x)
    return np.block([
        [f_x, zeros_nn, f_u],
        [-bundle.H_xx, -np.swapaxes(f_x, -1, -2), -bundle.H_xu],
        [np.zeros(lead + (m, n)), np.zeros(lead + (m, n)), np.zeros(lead + (m, m))],
    ])


def assemble_r(
    bundle: HamiltonianBundle,
    v: np.ndarray,
    ydot: np.ndarray,
    xddot: np.ndarray,
    lamddot: np.ndarray,
) -> RParts:
    """
    Assemble r = H_yy v + M ydot + [f_t; -H_xt; 0] - [xddot; lamddot; 0].

    Raises:
        DimensionError: If v or ydot do not have 2n+m components, or the
            second derivatives do not have n.
    """
    n, m = bundle.n, bundle.m
    width = 2 * n + m
    for name, arr, size in (("v", v, width), ("ydot", ydot, width), ("xddot", xddot, n), ("lamddot", lamddot, n)):
        if np.shape(arr)[-1] != size:
            raise DimensionError(f"{name} must have {size} components, got shape {np.shape(arr)}")
    r = np.einsum("...ij,...j->...i", hessian_matrix(bundle), v)
    r = r + np.einsum("...ij,...j->...i", m_matrix(bundle), ydot)
    r[..., :n] += bundle.f_t - xddot
    r[..., n:2 * n] += -bundle.H_xt - lamddot
    return RParts(x=r[..., :n], lam=r[..., n:2 * n], u=r[..., 2 * n:])


# ---------------------------------------------------------------------------
# Profile-level evaluation
# ---------------------------------------------------------------------------


class _Evaluation:
    """Every profile quantity the flow rows need, computed once per state."""

    def __init__(self, problem: OcpProblem, values: np.ndarray, t0: float, tf: float):
        n, m = problem.n, problem.m
        self.problem = problem
        self.n, self.m = n, m
        self.n_points = values.shape[0]
        self.t0, self.tf = t0, tf
        self.span = tf - t0
        self.h = self.span / (self.n_points - 1)
        self.sigma = np.linspace(0.0, 1.0, self.n_points)
        self.t = t0 + self.sigma * self.span

        self.values = values
        self.x, self.lam, self.u = values[:, :n], values[:, n:2 * n], values[:, 2 * n:]
        self.ydot = d1(values, self.h)
        self.xdot, self.lamdot = self.ydot[:, :n], self.ydot[:, n:2 * n]

        self.bundle = hamiltonian_bundle(problem, self.x, self.lam, self.u, self.t)
        self.v = optimality_vector(self.bundle, self.xdot, self.lamdot)

        # residual pieces of the J1 integrand
        self.a = self.xdot - self.bundle.f
        self.b = self.lamdot + self.bundle.H_x
        self.c = self.bundle.H_u
        self.integrand = (self.a ** 2).sum(axis=1) + (self.b ** 2).sum(axis=1) + (self.c ** 2).sum(axis=1)

        d = problem.derivatives
        self.x_f = self.x[-1]
        self.transversality: Optional[float] = None
        if problem.free_tf:
            self.transversality = float(self.bundle.H[-1] + d.phi_tf(self.x_f, tf))

    def weights(self) -> np.ndarray:
        return trapezoid_weights(self.n_points, self.h)

    def j1(self) -> float:
        value = float(_trapezoid(self.integrand, dx=self.h))
        if self.transversality is not None:
            value += self.transversality ** 2
        return value

    def bolza(self) -> float:
        return float(self.problem.phi(self.x_f, self.tf) + _trapezoid(self.bundle.L, dx=self.h))

    def residual_norm(self) -> float:
        norm = float(np.abs(self.v).max())
        if self.transversality is not None:
            norm = max(norm, abs(self.transversality))
        return norm

    def j1_gradient(self) -> np.ndarray:
        """
        d J1 / d y for every nodal value, as an (N, 2n+m) array.

        The pointwise part is 2 w_i H_yy v_i. The derivative samples feed
        back through the transpose of d1, and the squared transversality
        adds 2 (H + phi_tf) [H_x + phi_xtf; f; H_u] on the terminal node.
        """
        n, b = self.n, self.bundle
        w = self.weights()[:, None]
        grad = 2.0 * w * np.einsum("nij,nj->ni", hessian_matrix(b), self.v)
        grad[:, :n] += 2.0 * d1_transpose(w * self.a, self.h)
        grad[:, n:2 * n] += 2.0 * d1_transpose(w * self.b, self.h)
        P = self.transversality
        if P is not None:
            phi_xtf = np.asarray(self.problem.derivatives.phi_xtf(self.x_f, self.tf))
            grad[-1] += 2.0 * P * np.concatenate([b.H_x[-1] + phi_xtf, b.f[-1], b.H_u[-1]])
        return grad

    def tf_sensitivity(self) -> float:
        """d J1 / d tf with nodal values held on their sigma positions."""
        problem, d, b = self.problem, self.problem.derivatives, self.bundle
        sigma = self.sigma[:, None]
        coeffs = self.weights() / self.h
        dF = 2.0 * (
            (self.a * (-self.xdot / self.span - b.f_t * sigma)).sum(axis=1)
            + (self.b * (-self.lamdot / self.span + b.H_xt * sigma)).sum(axis=1)
            + (self.c * (b.H_ut * sigma)).sum(axis=1)
        )
        G = float((coeffs * self.integrand).sum() / (self.n_points - 1) + (self.weights() * dF).sum())
        if self.transversality is not None:
            dP = float(b.H_t[-1] + d.phi_tftf(self.x_f, self.tf))
            G += 2.0 * self.transversality * dP
        return G


def _evaluate(problem: OcpProblem, state: Union[FlowState, np.ndarray], grid: TimeGrid,
              tf: Optional[float] = None) -> _Evaluation:
    if isinstance(state, FlowState):
        values, tf = state.values, state.tf
    else:
        values = np.asarray(state, dtype=float)
    width = 2 * problem.n + problem.m
    if values.shape != (grid.n_points, width):
        raise DimensionError(f"State shape {values.shape} does not match ({grid.n_points}, {width})")
    if tf is None:
        tf = grid.tf
    return _Evaluation(problem, values, grid.t0, float(tf))


def pinned_entries(problem: OcpProblem, n_points: int) -> np.ndarray:
    """
    Boolean (N, 2n+m) mask of the values that never move.

    x(t0) always; per terminal component, x(tf) when it is Fixed and
    lam(tf) when it is Free.
    """
    n = problem.n
    fixed = problem.terminal_fixed_mask
    mask = np.zeros((n_points, 2 * n + problem.m), dtype=bool)
    mask[0, :n] = True
    mask[-1, :n] = fixed
    mask[-1, n:2 * n] = ~fixed
    return mask


def descent_metric(problem: OcpProblem, n_points: int, h: float, K: np.ndarray) -> np.ndarray:
    """
    Positive factors P with rates = -P * d J1 / d y.

    K / w_i everywhere except the state and costate columns of the first
    and last ONE_SIDED_REACH nodes, which use K.
    """
    metric = K[None, :] / trapezoid_weights(n_points, h)[:, None]
    index = np.arange(n_points)
    near_end = (index < ONE_SIDED_REACH) | (index >= n_points - ONE_SIDED_REACH)
    cols = 2 * problem.n
    metric[near_end, :cols] = K[:cols]
    return metric


def _rates(ev: _Evaluation, K: np.ndarray) -> np.ndarray:
    rates = -descent_metric(ev.problem, ev.n_points, ev.h, K) * ev.j1_gradient()
    rates[pinned_entries(ev.problem, ev.n_points)] = 0.0
    return rates


def _gains(problem: OcpProblem, gains: ZsGains) -> np.ndarray:
    return gains.diagonal(2 * problem.n + problem.m)


def zs_interior_rhs(problem: OcpProblem, state: FlowState, grid: TimeGrid, gains: ZsGains) -> np.ndarray:
    """
    Rates at the interior nodes.

    Away from the ends this is -2K r with r the discrete counterpart of
    the closed form in ``assemble_r``; rows within ONE_SIDED_REACH of an
    end follow -K d J1 / d y in their state and costate columns.

    Returns:
        np.ndarray: (N-2, 2n+m) array, rows for nodes 1 .. N-2.
    """
    ev = _evaluate(problem, state, grid)
    rates = _rates(ev, _gains(problem, gains))[1:-1]
    if gains.convective and problem.free_tf:
        rates += ev.ydot[1:-1] * ev.sigma[1:-1, None] * (-gains.k_tf * ev.tf_sensitivity())
    return rates


def zs_initial_boundary_rhs(problem: OcpProblem, state: FlowState, grid: TimeGrid, gains: ZsGains) -> np.ndarray:
    """
    Rates at the t0 node.

    x rows are 0 (x(t0) is prescribed). lam rows are -K d J1 / d lam,
    which is +K (3/2 b_0 + b_1) up to an O(h) term with b = lamdot + H_x.
    u rows are -2K r_u.
    """
    return _rates(_evaluate(problem, state, grid), _gains(problem, gains))[0]


def zs_terminal_rhs(problem: OcpProblem, state: FlowState, grid: TimeGrid, gains: ZsGains) -> np.ndarray:
    """
    Total rates of the sigma = 1 node.

    Per state component, a Fixed terminal value freezes x and drives lam
    with -K [3/2 b_f + b_(f-1) + 2 (H + phi_tf) f]; a Free terminal value
    pins lam and drives x with -K [3/2 a_f + a_(f-1) + 2 (H + phi_tf)(H_x + phi_xtf)],
    where a = xdot - f, b = lamdot + H_x and O(h) terms are left out. The
    transversality factor H + phi_tf enters only when tf is free. Control
    rows follow -2K [r_u + (H + phi_tf) H_u / w_f].
    """
    return _rates(_evaluate(problem, state, grid), _gains(problem, gains))[-1]


def tf_rate(problem: OcpProblem, state: FlowState, grid: TimeGrid, gains: ZsGains) -> float:
    """
    Rate of the free terminal time, -k_tf G.

    G is the exact derivative of the discretized J1 with respect to tf
    when the nodal values stay on their sigma positions: node times and the
    spacing stretch, derivative profiles rescale by (tf - t0).

    Raises:
        UsageError: If the problem has a fixed terminal time.
    """
    if not problem.free_tf:
        raise UsageError(f"Problem {problem.name} has a fixed terminal time; tf has no rate")
    return -gains.k_tf * _evaluate(problem, state, grid).tf_sensitivity()


def j1_value(problem: OcpProblem, state: FlowState, grid: TimeGrid) -> float:
    """Trapezoid value of J1, plus the squared transversality when tf is free."""
    return _evaluate(problem, state, grid).j1()


def bolza_cost(problem: OcpProblem, state: FlowState, grid: TimeGrid) -> float:
    """Original cost phi(x(tf), tf) + integral of L."""
    return _evaluate(problem, state, grid).bolza()


def default_guess(problem: OcpProblem, grid: TimeGrid) -> np.ndarray:
    """
    Initial profiles: x linear from x0 to prescribed terminal values (flat
    where the terminal value is free), lam and u identically zero.
    """
    n, m = problem.n, problem.m
    sigma = grid.sigma[:, None]
    target = np.where(problem.terminal_fixed_mask, problem.terminal_values, problem.x0)
    x = problem.x0 + sigma * (target - problem.x0)
    return np.hstack([x, np.zeros((grid.n_points, n + m))])


class ZsFlow(BaseFlow):
    """Semi-discretized flow for an OcpProblem."""

    monitored = "J1"

    def __init__(self, problem: OcpProblem, grid: TimeGrid, gains: ZsGains):
        super().__init__(problem, grid, gains)
        self.K = _gains(problem, gains)
        n, m = problem.n, problem.m
        self.component_names = (
            [f"x{i + 1}" for i in range(n)]
            + [f"lam{i + 1}" for i in range(n)]
            + [f"u{i + 1}" for i in range(m)]
        )

    @property
    def has_tf(self) -> bool:
        return self.problem.free_tf

    def pinned_mask(self) -> np.ndarray:
        return pinned_entries(self.problem, self.grid.n_points)

    def apply_pins(self, values: np.ndarray, tf: Optional[float]) -> np.ndarray:
        problem, n = self.problem, self.problem.n
        fixed = problem.terminal_fixed_mask
        out = np.array(values, dtype=float, copy=True)
        out[0, :n] = problem.x0
        out[-1, :n] = np.where(fixed, problem.terminal_values, out[-1, :n])
        if np.any(~fixed):
            phi_x = np.asarray(problem.derivatives.phi_x(out[-1, :n], self.grid.tf if tf is None else tf))
            out[-1, n:2 * n] = np.where(fixed, out[-1, n:2 * n], phi_x)
        return out

    def evaluation(self, values: np.ndarray, tf: Optional[float]) -> _Evaluation:
        return _Evaluation(self.problem, values, self.grid.t0, self.grid.tf if tf is None else tf)

    def metric(self, tf: Optional[float] = None) -> np.ndarray:
        """Per-entry factors turning the J1 gradient into rates at this tf."""
        grid = self.grid if tf is None else self.grid.copy(tf)
        return descent_metric(self.problem, grid.n_points, grid.h, self.K)

    def nodal_rates(self, values: np.ndarray, tf: Optional[float]) -> Tuple[np.ndarray, Optional[float]]:
        ev = self.evaluation(values, tf)
        rates = _rates(ev, self.K)
        rate_tf = None
        if self.has_tf:
            rate_tf = -self.gains.k_tf * ev.tf_sensitivity()
            if self.gains.convective:
                rates[1:-1] += ev.ydot[1:-1] * ev.sigma[1:-1, None] * rate_tf
        return rates, rate_tf

    def functional(self, values: np.ndarray, tf: Optional[float]) -> float:
        return self.evaluation(values, tf).j1()

    def residual_norm(self, values: np.ndarray, tf: Optional[float]) -> float:
        return self.evaluation(values, tf).residual_norm()

    def metrics(self, values: np.ndarray, tf: Optional[float]) -> dict:
        ev = self.evaluation(values, tf)
        return {
            "J": ev.bolza(),
            "J1": ev.j1(),
            "residual_norm": ev.residual_norm(),
            "transversality": ev.transversality,
        }

    def rate_scale(self) -> np.ndarray:
        return 2.0 * self.K

    def tf_scale(self) -> float:
        return self.gains.k_tf
