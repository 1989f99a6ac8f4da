import dataclasses

import numpy as np
import pytest

from vemsolver.cases.builtins import example2_case
from vemsolver.core.exceptions import ConfigError, DimensionError, EvaluationError
from vemsolver.models.problem_defs import (
    FD2_MIN_STEP,
    FD2_REL_STEP,
    FD_MIN_STEP,
    FD_REL_STEP,
    BoundarySpec,
    Fixed,
    Free,
    NodalFunction,
    OcpDerivatives,
    OcpProblem,
    finite_difference_bundle,
    tag_from_dict,
    verify_partials,
)


def test_boundary_spec_round_trip():
    spec = BoundarySpec(start=(Fixed(0.0), Free(0.5)), end=(Fixed(1.0), Free()))
    again = BoundarySpec.from_dict(spec.to_dict())
    assert again == spec
    np.testing.assert_array_equal(spec.fixed_mask(end=False), [True, False])
    np.testing.assert_array_equal(spec.fixed_values(end=True), [1.0, np.nan])


def test_boundary_spec_describe():
    spec = BoundarySpec(start=(Fixed(0.0),), end=(Fixed(0.0),))
    assert spec.describe() == "start [fixed(0)] end [fixed(0)]"


def test_boundary_spec_rejects_bad_entries():
    with pytest.raises(ConfigError):
        tag_from_dict({"kind": "periodic"})
    with pytest.raises(ConfigError):
        tag_from_dict({"kind": "fixed"})
    with pytest.raises(ConfigError):
        Fixed(float("inf"))
    with pytest.raises(DimensionError):
        BoundarySpec(start=(Fixed(0.0),), end=(Fixed(0.0), Free()))
    with pytest.raises(ConfigError):
        BoundarySpec.from_dict({"start": []})


def test_nodal_function_broadcasts_constants():
    fn = NodalFunction(lambda x, u, t: np.eye(2), (2, 2), "f_x")
    out = fn(np.zeros((4, 2)), np.zeros((4, 1)), np.zeros(4))
    assert out.shape == (4, 2, 2)
    np.testing.assert_array_equal(out[3], np.eye(2))


def test_nodal_function_names_failing_node():
    def bad(x, u, t):
        out = np.ones(len(t))
        out[2] = np.nan
        return out

    with pytest.raises(EvaluationError) as info:
        NodalFunction(bad, (), "L")(np.zeros((5, 1)), np.zeros((5, 1)), np.zeros(5))
    assert info.value.node == 2
    assert "L" in str(info.value)


def test_nodal_function_shape_mismatch():
    fn = NodalFunction(lambda x, u, t: np.zeros((len(t), 3)), (2,), "f")
    with pytest.raises(DimensionError):
        fn(np.zeros((4, 2)), np.zeros((4, 1)), np.zeros(4))


def test_nodal_function_pointwise_mode():
    fn = NodalFunction(lambda y, ydot, t: y[0] * t, (), "F", vectorized=False)
    out = fn(np.array([[1.0], [2.0]]), np.zeros((2, 1)), np.array([3.0, 4.0]))
    np.testing.assert_allclose(out, [3.0, 8.0])


def _samples(dim_x, dim_u, rng, count=4):
    return [(rng.normal(size=dim_x), rng.normal(size=dim_u), float(rng.uniform(0.1, 2.0))) for _ in range(count)]


def test_shipped_partials_pass(case1, case2, case3, rng):
    points1 = [(rng.normal(size=1), rng.normal(size=1), float(rng.uniform(0, 3))) for _ in range(4)]
    assert verify_partials(case1.problem, points1).passed

    assert verify_partials(case2.problem, _samples(2, 1, rng)).passed

    points3 = [(np.array([0.3, -0.2, float(rng.uniform(0.5, 3.0))]), rng.normal(size=1), float(rng.uniform(0.5, 1.5)))
               for _ in range(4)]
    report = verify_partials(case3.problem, points3)
    assert report.passed, report.summary()


def test_wrong_partial_is_reported(rng):
    derivatives = dataclasses.replace(example2_case._derivatives(), f_u=lambda x, u, t: 2.0 * example2_case.B)
    problem = dataclasses.replace(example2_case.build_problem(), derivatives=derivatives)
    report = verify_partials(problem, _samples(2, 1, rng))
    assert not report.passed
    assert report.failures() == ["f_u[1,0]"]
    assert "f_u" in report.summary()


def test_missing_partials_are_generated(rng):
    problem = OcpProblem(
        n=2,
        m=1,
        f=example2_case._f,
        L=example2_case._L,
        phi=lambda x, tf: 0.5 * float(x @ x) * tf,
        derivatives=OcpDerivatives(),
        x0=(1.0, 1.0),
        terminal_state=(Fixed(0.0), Free()),
        terminal_time=Fixed(2.0),
    )
    assert "f_x" in problem.generated_partials
    assert "phi_xtf" in problem.generated_partials
    x = rng.normal(size=(6, 2))
    u = rng.normal(size=(6, 1))
    t = np.linspace(0, 2, 6)
    np.testing.assert_allclose(problem.derivatives.f_x(x, u, t)[0], example2_case.A, atol=1e-6)
    np.testing.assert_allclose(problem.derivatives.L_uu(x, u, t)[:, 0, 0], 1.0, atol=1e-3)
    xf = np.array([0.5, -1.0])
    np.testing.assert_allclose(problem.derivatives.phi_x(xf, 3.0), 3.0 * xf, rtol=1e-6)
    np.testing.assert_allclose(problem.derivatives.phi_xtf(xf, 3.0), xf, rtol=1e-4)


def test_generated_second_partials_use_the_wider_step(rng):
    assert FD2_REL_STEP > FD_REL_STEP and FD2_MIN_STEP > FD_MIN_STEP
    problem = OcpProblem(
        n=2,
        m=1,
        f=example2_case._f,
        L=lambda x, u, t: np.cos(u[:, 0]) * x[:, 0] ** 2,
        phi=lambda x, tf: 0.0,
        derivatives=OcpDerivatives(),
        x0=(1.0, 1.0),
        terminal_state=(Fixed(0.0), Fixed(0.0)),
        terminal_time=Fixed(2.0),
    )
    x = rng.normal(size=(8, 2))
    u = rng.normal(size=(8, 1))
    t = np.linspace(0, 2, 8)
    d = problem.derivatives
    np.testing.assert_allclose(d.L_uu(x, u, t)[:, 0, 0], -np.cos(u[:, 0]) * x[:, 0] ** 2, atol=1e-4)
    np.testing.assert_allclose(d.L_xu(x, u, t)[:, 0, 0], -2.0 * x[:, 0] * np.sin(u[:, 0]), atol=1e-4)
    np.testing.assert_allclose(d.L_xx(x, u, t)[:, 0, 0], 2.0 * np.cos(u[:, 0]), atol=1e-4)
    np.testing.assert_allclose(d.L_xx(x, u, t)[:, 1, 1], 0.0, atol=1e-4)


def test_ocp_problem_validation():
    base = example2_case.build_problem()
    with pytest.raises(ConfigError):
        dataclasses.replace(base, terminal_time=Free())
    with pytest.raises(DimensionError):
        dataclasses.replace(base, x0=(1.0, 1.0, 1.0))
    with pytest.raises(DimensionError):
        dataclasses.replace(base, terminal_state=(Fixed(0.0),))
    with pytest.raises(ConfigError):
        dataclasses.replace(base, terminal_time=Fixed(-1.0))


def test_ocp_boundary_view():
    problem = example2_case.build_problem()
    assert problem.boundary.describe() == "start [fixed(1), fixed(1)] end [fixed(0), fixed(0)]"
    assert not problem.free_tf
    assert problem.tf_initial == 2.0


def test_finite_difference_bundle():
    bundle = finite_difference_bundle(lambda x, t: x[:, 0] ** 2 * t, {"x": 1, "t": 0})
    x = np.array([[1.0], [2.0]])
    t = np.array([3.0, 0.5])
    np.testing.assert_allclose(bundle["x"](x, t)[:, 0], 2 * x[:, 0] * t, rtol=1e-6)
    np.testing.assert_allclose(bundle["t"](x, t), x[:, 0] ** 2, rtol=1e-6)
    np.testing.assert_allclose(bundle[("x", "t")](x, t)[:, 0], 2 * x[:, 0], rtol=1e-4)
    np.testing.assert_allclose(bundle[("x", "x")](x, t)[:, 0, 0], 2 * t, rtol=1e-4)
