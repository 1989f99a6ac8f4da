import numpy as np
import pytest

from vemsolver.cases.builtins import example2_case, example3_case
from vemsolver.core.exceptions import DimensionError, UsageError
from vemsolver.flows.zs_flow import (
    ONE_SIDED_REACH,
    FlowState,
    ZsFlow,
    ZsGains,
    assemble_r,
    bolza_cost,
    default_guess,
    descent_metric,
    hamiltonian_bundle,
    hessian_matrix,
    j1_value,
    pinned_entries,
    tf_rate,
    zs_initial_boundary_rhs,
    zs_interior_rhs,
    zs_terminal_rhs,
)
from vemsolver.models.grid import d1, d2, make_grid
from vemsolver.models.problem_defs import Fixed, Free, OcpDerivatives, OcpProblem


def _state(values, problem, tf=None):
    return FlowState.from_values(values, problem.n, problem.m, tf)


def _smooth_perturbation(grid, rng, width, scale=0.1):
    t = grid.times
    basis = np.column_stack([np.ones_like(t), t, t ** 2, np.sin(t)])
    return scale * basis @ rng.normal(size=(4, width))


def _example3_state(grid, rng, tf):
    sigma = grid.sigma
    noise = _smooth_perturbation(grid, rng, 7, scale=0.05)
    values = np.column_stack([
        2.0 * sigma,
        -2.0 * sigma,
        1.0 + 4.0 * sigma,
        -0.2 + 0.1 * sigma,
        0.3 * np.ones_like(sigma),
        -0.1 * sigma,
        0.4 + 0.8 * sigma,
    ]) + noise
    assert np.all(values[:, 2] > 0)
    return _state(values, example3_case.build_problem(), tf)


def test_rates_vanish_at_the_reference_to_second_order():
    problem = example2_case.build_problem()
    gains = ZsGains()
    errors = []
    for n in (21, 41, 81):
        grid = make_grid(0.0, 2.0, n)
        flow = ZsFlow(problem, grid, gains)
        rates, rate_tf = flow.nodal_rates(example2_case.reference(grid.times), None)
        assert rate_tf is None
        errors.append(np.abs(rates).max())
    for coarse, fine in zip(errors, errors[1:]):
        assert coarse / fine == pytest.approx(4.0, rel=0.05)


def test_boundary_rows_vanish_at_the_reference(grid2):
    problem = example2_case.build_problem()
    state = _state(example2_case.reference(grid2.times), problem)
    np.testing.assert_allclose(zs_initial_boundary_rhs(problem, state, grid2, ZsGains()), 0.0, atol=1e-10)
    np.testing.assert_allclose(zs_terminal_rhs(problem, state, grid2, ZsGains()), 0.0, atol=1e-10)
    assert zs_interior_rhs(problem, state, grid2, ZsGains()).shape == (grid2.n_points - 2, 5)


def _fd_gradient(problem, values, grid, tf=None, nodes=None, step=1e-6):
    nodes = range(grid.n_points) if nodes is None else nodes
    gradient = np.zeros((len(nodes), values.shape[1]))
    for row, i in enumerate(nodes):
        for k in range(values.shape[1]):
            up, down = values.copy(), values.copy()
            up[i, k] += step
            down[i, k] -= step
            gradient[row, k] = (
                j1_value(problem, _state(up, problem, tf), grid) - j1_value(problem, _state(down, problem, tf), grid)
            ) / (2 * step)
    return gradient


def test_interior_rates_follow_the_j1_gradient(grid2, rng):
    """Interior rows of r are half the J1 gradient per unit weight."""
    problem = example2_case.build_problem()
    nodes = range(3, grid2.n_points - 3)
    for _ in range(3):
        values = example2_case.reference(grid2.times) + _smooth_perturbation(grid2, rng, 5)
        r = -zs_interior_rhs(problem, _state(values, problem), grid2, ZsGains()) / 2.0
        expected = _fd_gradient(problem, values, grid2, nodes=nodes) / (2.0 * grid2.h)
        actual = r[2:grid2.n_points - 4]
        tol = max(1e-4, 10 * grid2.h ** 2)
        assert np.abs(actual - expected).max() <= tol * max(np.abs(expected).max(), 1.0)


def test_every_rate_is_a_scaled_j1_gradient(rng):
    problem = example3_case.build_problem()
    grid = make_grid(0.0, 0.9, 21)
    flow = ZsFlow(problem, grid, ZsGains(K=[1.0, 0.5, 2.0, 1.0, 1.5, 0.8, 1.2], k_tf=0.7))
    free = ~flow.pinned_mask()
    for _ in range(3):
        state = _example3_state(grid, rng, tf=0.9)
        rates, _ = flow.nodal_rates(state.values, state.tf)
        gradient = _fd_gradient(problem, state.values, grid, tf=state.tf)
        expected = -flow.metric(state.tf) * gradient
        scale = max(np.abs(expected[free]).max(), 1.0)
        np.testing.assert_allclose(rates[free], expected[free], rtol=0, atol=1e-6 * scale)
        np.testing.assert_array_equal(rates[~free], 0.0)


def test_flow_decreases_j1_at_the_predicted_rate(rng):
    problem = example3_case.build_problem()
    grid = make_grid(0.0, 1.0, 31)
    gains = ZsGains(K=rng.uniform(0.5, 2.0, size=7), k_tf=rng.uniform(0.5, 2.0))
    for _ in range(3):
        flow = ZsFlow(problem, grid, gains)
        state = _example3_state(grid, rng, tf=1.0)
        z = flow.prepare(state.values, state.tf)
        dz = flow.rhs(0.0, z)
        layout = flow.layout
        metric = flow.metric(1.0)[~layout.pinned]
        predicted = -(dz[:-1] ** 2 / metric).sum() - dz[-1] ** 2 / gains.k_tf
        assert predicted < 0

        eps = 1e-7
        slope = (flow.functional(*flow.unpack(z + eps * dz)) - flow.functional(*flow.unpack(z - eps * dz))) / (2 * eps)
        assert slope == pytest.approx(predicted, rel=1e-4)


def test_discrete_rows_approach_the_closed_form_residual(rng):
    problem = example2_case.build_problem()
    perturbation = rng.normal(size=(4, 5))
    gaps = []
    for n in (41, 81):
        grid = make_grid(0.0, 2.0, n)
        t = grid.times
        basis = np.column_stack([np.ones_like(t), t, t ** 2, np.sin(t)])
        values = example2_case.reference(t) + 0.1 * basis @ perturbation
        discrete = -zs_interior_rhs(problem, _state(values, problem), grid, ZsGains()) / 2.0

        bundle = hamiltonian_bundle(problem, values[:, :2], values[:, 2:4], values[:, 4:], t)
        ydot, second = d1(values, grid.h), d2(values, grid.h)
        v = np.concatenate([bundle.H_x + ydot[:, 2:4], bundle.f - ydot[:, :2], bundle.H_u], axis=1)
        closed = assemble_r(bundle, v, ydot, second[:, :2], second[:, 2:4]).stacked[1:-1]
        inner = slice(2, n - 4)
        gaps.append(np.abs(discrete[inner] - closed[inner]).max())
    assert gaps[1] <= gaps[0] / 3.0


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_rates_grow_away_from_the_reference(grid2, seed):
    problem = example2_case.build_problem()
    flow = ZsFlow(problem, grid2, ZsGains())
    reference = example2_case.reference(grid2.times)
    at_rest, _ = flow.nodal_rates(reference, None)
    perturbed = flow.apply_pins(reference + _smooth_perturbation(grid2, np.random.default_rng(seed), 5), None)
    moved, _ = flow.nodal_rates(perturbed, None)
    assert np.abs(moved).max() >= 10.0 * np.abs(at_rest).max()


def test_pinned_entries_follow_the_terminal_conditions():
    problem = example3_case.build_problem()
    mask = pinned_entries(problem, 11)
    assert mask.sum() == 6
    np.testing.assert_array_equal(mask[0], [True, True, True, False, False, False, False])
    np.testing.assert_array_equal(mask[-1], [True, True, False, False, False, True, False])
    assert not mask[1:-1].any()


def test_descent_metric_uses_plain_gains_near_the_ends(grid2):
    problem = example2_case.build_problem()
    K = np.array([1.0, 2.0, 3.0, 4.0, 5.0])
    metric = descent_metric(problem, grid2.n_points, grid2.h, K)
    np.testing.assert_allclose(metric[ONE_SIDED_REACH], K / grid2.h)
    np.testing.assert_allclose(metric[0, :4], K[:4])
    np.testing.assert_allclose(metric[-ONE_SIDED_REACH, :4], K[:4])
    assert metric[0, 4] == pytest.approx(K[4] / (0.5 * grid2.h))


def test_tf_sensitivity_matches_finite_differences(rng):
    problem = example3_case.build_problem()
    grid = make_grid(0.0, 0.9, 51)
    gains = ZsGains(k_tf=1.0)
    for _ in range(3):
        state = _example3_state(grid, rng, tf=0.9)
        G = -tf_rate(problem, state, grid, gains)
        delta = 1e-6
        up = j1_value(problem, _state(state.values, problem, 0.9 + delta), grid)
        down = j1_value(problem, _state(state.values, problem, 0.9 - delta), grid)
        fd = (up - down) / (2 * delta)
        assert abs(G - fd) <= 1e-4 * max(1.0, abs(fd))


def test_tf_rate_needs_free_terminal_time(grid2):
    problem = example2_case.build_problem()
    state = _state(example2_case.reference(grid2.times), problem)
    with pytest.raises(UsageError):
        tf_rate(problem, state, grid2, ZsGains())


def test_bundle_at_rest():
    problem = example3_case.build_problem()
    bundle = hamiltonian_bundle(problem, np.zeros(3), np.zeros(3), np.array([0.3]), 0.0)
    np.testing.assert_allclose(bundle.f, [0.0, 0.0, 10 * np.cos(0.3)])
    assert bundle.H == pytest.approx(0.0)
    np.testing.assert_allclose(bundle.H_u, [0.0])


def test_hessian_is_symmetric(rng):
    problem = example3_case.build_problem()
    bundle = hamiltonian_bundle(problem, rng.normal(size=3), rng.normal(size=3), rng.normal(size=1), 0.4)
    H = hessian_matrix(bundle)
    assert H.shape == (7, 7)
    np.testing.assert_allclose(H, H.T)


def test_assemble_r_checks_widths():
    problem = example2_case.build_problem()
    bundle = hamiltonian_bundle(problem, np.zeros(2), np.zeros(2), np.zeros(1), 0.0)
    with pytest.raises(DimensionError):
        assemble_r(bundle, np.zeros(4), np.zeros(5), np.zeros(2), np.zeros(2))


def test_layout_counts(grid2):
    problem = example2_case.build_problem()
    flow = ZsFlow(problem, grid2, ZsGains())
    flow.prepare(default_guess(problem, grid2))
    assert flow.layout.total_size == 205
    assert flow.layout.size == 201
    assert flow.component_names == ["x1", "x2", "lam1", "lam2", "u1"]


def test_pins_override_the_guess():
    problem = example3_case.build_problem()
    grid = make_grid(0.0, 1.0, 101)
    flow = ZsFlow(problem, grid, ZsGains())
    guess = example3_case.ramp_guess(grid)
    z = flow.prepare(guess.values, guess.tf)
    assert flow.layout.total_size == 101 * 7 + 1
    assert flow.layout.size == 101 * 7 - 6 + 1
    values, tf = flow.unpack(z)
    assert tf == 1.0
    np.testing.assert_array_equal(values[0, :3], [0.0, 0.0, 0.0])
    np.testing.assert_array_equal(values[-1, :2], [2.0, -2.0])
    assert values[-1, 5] == 0.0
    np.testing.assert_array_equal(values[1:-1, :2], guess.values[1:-1, :2])


def test_free_terminal_costate_keeps_its_prepared_value():
    problem = OcpProblem(
        n=2,
        m=1,
        f=example2_case._f,
        L=example2_case._L,
        phi=lambda x, tf: 0.5 * float(x @ x),
        derivatives=OcpDerivatives(),
        x0=(1.0, 1.0),
        terminal_state=(Free(), Free()),
        terminal_time=Fixed(2.0),
    )
    grid = make_grid(0.0, 2.0, 11)
    flow = ZsFlow(problem, grid, ZsGains())
    guess = default_guess(problem, grid)
    guess[-1, :2] = [0.4, -0.3]
    z = flow.prepare(guess)
    values, _ = flow.unpack(z)
    np.testing.assert_allclose(values[-1, 2:4], [0.4, -0.3], rtol=1e-6)

    moved = values.copy()
    moved[-1, :2] = [2.0, 5.0]
    after, _ = flow.unpack(flow.layout.pack(moved))
    np.testing.assert_array_equal(after[-1, :2], [2.0, 5.0])
    np.testing.assert_array_equal(after[-1, 2:4], values[-1, 2:4])


def test_reference_objectives(grid2):
    problem = example2_case.build_problem()
    state = _state(example2_case.reference(grid2.times), problem)
    assert j1_value(problem, state, grid2) <= 1e-4
    assert bolza_cost(problem, state, grid2) == pytest.approx(3.25, abs=1e-2)


def test_convective_term(rng):
    problem = example3_case.build_problem()
    grid = make_grid(0.0, 0.9, 41)
    state = _example3_state(grid, rng, tf=0.9)
    plain = zs_interior_rhs(problem, state, grid, ZsGains(convective=False))
    stretched = zs_interior_rhs(problem, state, grid, ZsGains(convective=True))
    rate = tf_rate(problem, state, grid, ZsGains())
    ydot = d1(state.values, grid.h)
    np.testing.assert_allclose(stretched - plain, ydot[1:-1] * grid.sigma[1:-1, None] * rate, atol=1e-12)


def test_default_guess_is_linear_between_boundaries(grid2):
    problem = example3_case.build_problem()
    values = default_guess(problem, grid2)
    np.testing.assert_allclose(values[-1, :3], [2.0, -2.0, 0.0])
    np.testing.assert_allclose(values[:, 3:], 0.0)


def test_state_validation():
    with pytest.raises(DimensionError):
        FlowState.from_values(np.zeros((5, 4)), 2, 1)
