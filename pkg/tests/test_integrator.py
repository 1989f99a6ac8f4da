import dataclasses
import math

import numpy as np
import pytest
from pydantic import ValidationError

from vemsolver.cases.builtins.example1_case import build_problem, reference
from vemsolver.core.exceptions import DescentViolationError, EvaluationError, StiffnessSuspectedError, UsageError
from vemsolver.flows.cov_flow import functional_J
from vemsolver.flows.zs_flow import ZsFlow, ZsGains
from vemsolver.models.grid import Profile, make_grid
from vemsolver.models.problem_defs import Free
from vemsolver.solver.integrator import (
    EvolveOptions,
    Method,
    Tolerances,
    evolve,
    integrate,
    step_implicit,
    step_rk45,
)
from vemsolver.solver.jacobian import FlowJacobian


def _decay(tau, y):
    return -y


def test_single_rk45_step():
    step = step_rk45(_decay, np.array([1.0]), 0.0, 0.1, Tolerances())
    assert step.dtau == 0.1
    assert step.y[0] == pytest.approx(math.exp(-step.dtau), abs=1e-8)
    np.testing.assert_allclose(step.f_new, -step.y)
    assert step.dtau_next > 0


def test_single_implicit_step():
    step = step_implicit(_decay, np.array([1.0]), 0.0, 0.01, Tolerances(rel_tol=1e-3, abs_tol=1e-6))
    assert 0 < step.dtau <= 0.01
    assert step.y[0] == pytest.approx(math.exp(-step.dtau), abs=1e-5)


@pytest.mark.parametrize("method", ["rk45", "stiff"])
def test_integrate_accuracy(method):
    y0 = np.array([1.0, 2.0])
    result = integrate(_decay, y0, 2.0, method=method, tols=Tolerances(rel_tol=1e-8, abs_tol=1e-10))
    assert result.stop_reason == "tau_max"
    assert result.tau == pytest.approx(2.0)
    tol = 1e-6 if method == "rk45" else 1e-4
    np.testing.assert_allclose(result.y, y0 * math.exp(-2.0), rtol=tol)


def test_stiff_method_takes_fewer_steps():
    def rhs(tau, y):
        return -1e4 * y

    # the horizon runs far past the transient, where only stability limits the explicit step
    y0 = np.array([1.0])
    tols = Tolerances(rel_tol=1e-4, abs_tol=1e-9)
    explicit = integrate(rhs, y0, 10.0, method="rk45", tols=tols)
    implicit = integrate(rhs, y0, 10.0, method=Method.STIFF, tols=tols)
    assert implicit.stats.accepted * 10 < explicit.stats.accepted
    assert abs(implicit.y[0]) < 1e-6
    assert abs(explicit.y[0]) < 1e-6
    assert implicit.stats.jacobian_evaluations >= 1


def test_collapsing_step_signals_stiffness():
    def rhs(tau, y):
        raise EvaluationError("always fails")

    with pytest.raises(StiffnessSuspectedError):
        step_rk45(rhs, np.array([1.0]), 0.0, 0.1, Tolerances(), f0=np.array([0.0]))


def test_fixed_step_and_checkpoints():
    seen = []

    def on_step(tau, y, f, at_checkpoint):
        if at_checkpoint:
            seen.append(tau)
        return None

    result = integrate(_decay, np.array([1.0]), 1.0, fixed_step=0.01, checkpoint_every=0.25, on_step=on_step)
    assert result.stats.accepted == 100
    assert seen == pytest.approx([0.25, 0.5, 0.75, 1.0])
    assert result.y[0] == pytest.approx(math.exp(-1.0), abs=1e-9)


def test_callback_can_stop():
    result = integrate(_decay, np.array([1.0]), 10.0, on_step=lambda tau, y, f, c: "done" if tau > 1 else None)
    assert result.stop_reason == "done"
    assert 1.0 < result.tau < 10.0


def test_max_steps_stop():
    result = integrate(_decay, np.array([1.0]), 10.0, fixed_step=0.01, max_steps=5)
    assert result.stop_reason == "max_steps"
    assert result.tau == pytest.approx(0.05)


def test_evaluation_errors_carry_tau():
    def rhs(tau, y):
        if y[0] < 0.45:
            raise EvaluationError("left the domain", node=3)
        return -np.ones_like(y)

    with pytest.raises(EvaluationError) as info:
        integrate(rhs, np.array([1.0]), 2.0, fixed_step=0.1)
    assert info.value.tau == pytest.approx(0.5)
    assert info.value.node == 3


def test_evolve_options_validation():
    with pytest.raises(ValidationError):
        EvolveOptions(fixed_step=0.1, method="stiff")
    with pytest.raises(ValidationError):
        EvolveOptions(unknown_option=1)
    with pytest.raises(ValidationError):
        EvolveOptions(rel_tol=-1.0)
    assert EvolveOptions(method="rk45").method is Method.RK45


def test_evolve_options_from_settings():
    opts = EvolveOptions.from_settings(rel_tol=1e-3, tau_max=None)
    assert opts.rel_tol == 1e-3
    assert opts.tau_max == 1000.0
    assert opts.max_steps == 200000


def test_jacobian_dense_and_sparse():
    def tridiagonal(size):
        A = -2.0 * np.eye(size) + np.eye(size, k=1) + np.eye(size, k=-1)
        return A, (lambda tau, y: A @ y)

    A, rhs = tridiagonal(100)
    jac = FlowJacobian(rhs)
    jac.compute(0.0, np.ones(100))
    assert jac.is_sparse
    np.testing.assert_allclose(jac.matrix.toarray(), A, atol=1e-6)
    b = np.linspace(0, 1, 100)
    np.testing.assert_allclose(jac.factor(0.1).solve(b), np.linalg.solve(np.eye(100) - 0.1 * A, b), rtol=1e-6)

    A, rhs = tridiagonal(3)
    jac = FlowJacobian(rhs)
    jac.compute(0.0, np.zeros(3))
    assert not jac.is_sparse
    assert jac.evaluations == 1
    np.testing.assert_allclose(jac.apply(np.ones(3)), A @ np.ones(3), atol=1e-6)
    assert jac.factor(0.5) is jac.factor(0.5)


def test_example1_converges(case1):
    grid = make_grid(0.0, math.pi, case1.default_n_points)
    opts = EvolveOptions(tau_max=6.0, snapshot_every=0.5, residual_tol=1e-12)
    result = evolve(case1.problem, case1.default_guess(grid), grid, case1.default_gains, opts)
    assert result.stop_reason == "tau_max"
    assert result.tau == pytest.approx(6.0)
    assert case1.max_error(grid.times, result.values) <= 1e-2
    assert all(record.descent_ok for record in result.diagnostics)
    taus = [record.tau for record in result.diagnostics]
    assert taus == sorted(taus)
    assert taus[0] == 0.0 and len(taus) == 13
    values = [record.J for record in result.diagnostics]
    assert all(later <= earlier + 1e-9 for earlier, later in zip(values, values[1:]))
    assert result.values[0, 0] == 0.0 and result.values[-1, 0] == 0.0
    assert result.component_names == ["y1"]


def test_example1_long_horizon(case1):
    grid = make_grid(0.0, math.pi, case1.default_n_points)
    opts = EvolveOptions(tau_max=20.0, snapshot_every=5.0, residual_tol=1e-12)
    result = evolve(case1.problem, None, grid, case1.default_gains, opts)
    assert case1.max_error(grid.times, result.values) <= 1e-3

    fine = make_grid(0.0, math.pi, 10001)
    optimum = functional_J(case1.problem, Profile(reference(fine.times)), fine)
    assert result.final.J == pytest.approx(optimum, abs=1e-3)


def test_inconsistent_rhs_aborts(case1):
    wrong = dataclasses.replace(build_problem(), F_y=lambda y, ydot, t: 2.0 * np.cos(t)[:, None])
    grid = make_grid(0.0, math.pi, 51)
    with pytest.raises(DescentViolationError) as info:
        evolve(wrong, None, grid, case1.default_gains, EvolveOptions(tau_max=5.0))
    assert info.value.dump
    assert info.value.dump[0]["tau"] == 0.0


def test_already_stationary_guess(case1):
    grid = make_grid(0.0, math.pi, 21)
    problem = dataclasses.replace(
        build_problem(), F_y=lambda y, ydot, t: np.zeros_like(y)
    )
    result = evolve(problem, None, grid, case1.default_gains, EvolveOptions(tau_max=5.0))
    assert result.stop_reason == "residual_tol"
    assert result.tau == 0.0
    assert len(result.diagnostics) == 1


@pytest.mark.slow
def test_example2_converges(case2):
    grid = make_grid(0.0, 2.0, case2.default_n_points)
    opts = EvolveOptions(method="stiff", tau_max=case2.default_tau_max, snapshot_every=10.0)
    result = evolve(case2.problem, case2.default_guess(grid), grid, case2.default_gains, opts)
    assert result.flow_total_size == 205
    assert result.flow_size == 201
    assert case2.max_error(grid.times, result.values) <= 2e-2
    assert result.final.J1 <= 1e-4
    assert all(record.descent_ok for record in result.diagnostics)


@pytest.mark.slow
def test_example3_finds_the_minimum_time(case3):
    grid = make_grid(0.0, case3.problem.tf_initial, case3.default_n_points)
    opts = EvolveOptions(method="stiff", tau_max=case3.default_tau_max, snapshot_every=2.0)
    result = evolve(case3.problem, case3.default_guess(grid), grid, case3.default_gains, opts)
    assert result.tf == pytest.approx(case3.reference_tf, abs=2e-3)
    assert grid.tf == result.tf
    assert max(record.tf for record in result.diagnostics) > 1.0

    flow = ZsFlow(case3.problem, grid, case3.default_gains)
    transversality = flow.evaluation(result.values, result.tf).transversality
    assert abs(transversality) <= 5e-3

    assert result.final.J1 <= 1e-4
    assert all(record.descent_ok for record in result.diagnostics)
    settled = [record.tf for record in result.diagnostics if record.tau >= 200.0]
    assert settled and max(abs(tf - result.tf) for tf in settled) <= 5e-3


def test_fixed_step_needs_the_explicit_method(case2):
    grid = make_grid(0.0, 2.0, 11)
    with pytest.raises(UsageError):
        evolve(case2.problem, None, grid, case2.default_gains, EvolveOptions(fixed_step=0.01, tau_max=0.1))


@pytest.mark.parametrize("seed", range(10))
def test_random_gains_never_raise_j1(case2, case3, seed):
    rng = np.random.default_rng(seed)
    case = case2 if seed % 2 == 0 else case3
    problem = case.problem
    width = 2 * problem.n + problem.m
    gains = ZsGains(K=rng.uniform(0.5, 2.0, size=width), k_tf=rng.uniform(0.5, 2.0))
    tf = problem.tf_initial if problem.free_tf else 2.0
    grid = make_grid(0.0, tf, 21)
    opts = EvolveOptions(method="stiff", tau_max=2.0, snapshot_every=0.25, residual_tol=1e-12)
    result = evolve(problem, case.default_guess(grid), grid, gains, opts)
    assert all(record.descent_ok for record in result.diagnostics)
    values = [record.J1 for record in result.diagnostics]
    slack = 1e-9 * max(1.0, values[0])
    assert all(later <= earlier + slack for earlier, later in zip(values, values[1:]))
    assert values[-1] < values[0]


@pytest.mark.slow
def test_example2_improves_when_the_grid_is_refined(case2):
    j1, errors = [], []
    for n in (21, 41):
        grid = make_grid(0.0, 2.0, n)
        opts = EvolveOptions(method="stiff", tau_max=case2.default_tau_max, snapshot_every=10.0)
        result = evolve(case2.problem, case2.default_guess(grid), grid, case2.default_gains, opts)
        j1.append(result.final.J1)
        errors.append(case2.max_error(grid.times, result.values))
    assert j1[1] <= j1[0] / 2.0
    assert errors[1] < errors[0]


@pytest.mark.slow
def test_example2_with_free_terminal_state(case2):
    problem = dataclasses.replace(case2.problem, terminal_state=(Free(), Free()))
    grid = make_grid(0.0, 2.0, 41)
    opts = EvolveOptions(method="stiff", tau_max=case2.default_tau_max, snapshot_every=10.0)
    result = evolve(problem, None, grid, case2.default_gains, opts)
    assert np.abs(result.values[:, 4]).max() < 2e-2
    np.testing.assert_array_equal(result.values[-1, 2:4], 0.0)
    np.testing.assert_allclose(result.values[:, 1], 1.0, atol=2e-2)
    assert all(record.descent_ok for record in result.diagnostics)
