"""
Problem definitions.

This module holds the data model for the two problem families the solver
handles: unconstrained calculus-of-variations problems (minimize the
integral of F(y, ydot, t)) and Bolza optimal control problems with
dynamics f, running cost L and terminal cost phi.

All nodal callables are evaluated on whole grids at once. With
``vectorized=True`` (the default) a callable receives arrays with a leading
node axis, e.g. x of shape (N, n), u of shape (N, m) and t of shape (N,),
and must return an array whose leading axis is N. With ``vectorized=False``
it receives one node at a time and the problem loops over the grid.

Shape conventions for the derivative bundle (leading node axis omitted):
f_x[k, i] = df_k/dx_i, f_u[k, a] = df_k/du_a, f_xx[k, i, j],
f_xu[k, i, a], f_uu[k, a, b], f_xt[k, i], f_ut[k, a].
"""

import logging
from dataclasses import dataclass, field, fields, replace
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from vemsolver.core.exceptions import ConfigError, DimensionError, EvaluationError

# Configure logger
logger = logging.getLogger(__name__)

# Central-difference step rule for generated partials
FD_REL_STEP = 1e-7
FD_MIN_STEP = 1e-6

# Second partials are nested central differences of raw function values.
# The inner difference error grows like 1/step, so these steps stay wider
# than the first-partial rule max(FD_MIN_STEP, FD_REL_STEP * |v|).
FD2_REL_STEP = 1e-5
FD2_MIN_STEP = 1e-4

# Verification oracle: five-point stencil with its own step
ORACLE_REL_STEP = 1e-3
ORACLE_MIN_STEP = 1e-3


# ---------------------------------------------------------------------------
# Boundary conditions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Fixed:
    """A prescribed value."""

    value: float

    def __post_init__(self):
        if not np.isfinite(self.value):
            raise ConfigError(f"Fixed boundary value must be finite, got {self.value}")
        object.__setattr__(self, "value", float(self.value))

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": "fixed", "value": self.value}


@dataclass(frozen=True)
class Free:
    """A value left to the optimizer, with an optional initial guess."""

    guess: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {"kind": "free"}
        if self.guess is not None:
            data["guess"] = self.guess
        return data


BoundaryTag = Union[Fixed, Free]


def tag_from_dict(data: Mapping[str, Any]) -> BoundaryTag:
    """
    Build a boundary tag from its dict form.

    Raises:
        ConfigError: If the kind is unknown or a fixed value is missing.
    """
    kind = str(data.get("kind", "")).lower()
    if kind == "fixed":
        if "value" not in data:
            raise ConfigError("Fixed boundary entry needs a 'value'")
        return Fixed(float(data["value"]))
    if kind == "free":
        guess = data.get("guess")
        return Free(None if guess is None else float(guess))
    raise ConfigError(f"Unknown boundary kind: {data.get('kind')!r}")


@dataclass(frozen=True)
class BoundarySpec:
    """
    Per-component boundary tags at both ends of the horizon.

    Attributes:
        start (Tuple[BoundaryTag, ...]): Tags at t0.
        end (Tuple[BoundaryTag, ...]): Tags at tf.
    """

    start: Tuple[BoundaryTag, ...]
    end: Tuple[BoundaryTag, ...]

    def __post_init__(self):
        object.__setattr__(self, "start", tuple(self.start))
        object.__setattr__(self, "end", tuple(self.end))
        if len(self.start) != len(self.end):
            raise DimensionError(
                f"Boundary spec has {len(self.start)} start tags but {len(self.end)} end tags"
            )
        for tag in self.start + self.end:
            if not isinstance(tag, (Fixed, Free)):
                raise ConfigError(f"Boundary tag must be Fixed or Free, got {tag!r}")

    @property
    def n(self) -> int:
        return len(self.start)

    def tags(self, end: bool) -> Tuple[BoundaryTag, ...]:
        return self.end if end else self.start

    def fixed_mask(self, end: bool) -> np.ndarray:
        return np.array([isinstance(tag, Fixed) for tag in self.tags(end)], dtype=bool)

    def fixed_values(self, end: bool) -> np.ndarray:
        """Prescribed values, NaN where the component is free."""
        return np.array(
            [tag.value if isinstance(tag, Fixed) else np.nan for tag in self.tags(end)]
        )

    def to_dict(self) -> Dict[str, List[Dict[str, Any]]]:
        return {
            "start": [tag.to_dict() for tag in self.start],
            "end": [tag.to_dict() for tag in self.end],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "BoundarySpec":
        try:
            start = tuple(tag_from_dict(item) for item in data["start"])
            end = tuple(tag_from_dict(item) for item in data["end"])
        except KeyError as exc:
            raise ConfigError(f"Boundary spec is missing section {exc}") from exc
        return cls(start=start, end=end)

    def describe(self) -> str:
        def _fmt(tag: BoundaryTag) -> str:
            return f"fixed({tag.value:g})" if isinstance(tag, Fixed) else "free"

        start = ", ".join(_fmt(tag) for tag in self.start)
        end = ", ".join(_fmt(tag) for tag in self.end)
        return f"start [{start}] end [{end}]"


# ---------------------------------------------------------------------------
# Nodal evaluation
# ---------------------------------------------------------------------------


class NodalFunction:
    """
    A problem callable evaluated over every grid node at once.

    Results are broadcast to (N,) + shape, so a callable may return a
    constant (for example a fixed matrix) without tiling it. Non-finite
    output raises EvaluationError naming the first failing node.
    """

    def __init__(self, fn: Callable, shape: Tuple[int, ...], name: str, vectorized: bool = True):
        self.fn = fn
        self.shape = tuple(shape)
        self.name = name
        self.vectorized = vectorized

    def __call__(self, *args: np.ndarray) -> np.ndarray:
        n_nodes = len(args[0])
        if self.vectorized:
            raw = np.asarray(self.fn(*args), dtype=float)
        else:
            raw = np.stack(
                [np.asarray(self.fn(*(arg[i] for arg in args)), dtype=float) for i in range(n_nodes)]
            )
        try:
            out = np.array(np.broadcast_to(raw, (n_nodes,) + self.shape))
        except ValueError as exc:
            raise DimensionError(
                f"{self.name} returned shape {raw.shape}, expected {(n_nodes,) + self.shape}"
            ) from exc
        if not np.all(np.isfinite(out)):
            bad = np.argwhere(~np.isfinite(out.reshape(n_nodes, -1)))[0][0]
            raise EvaluationError(f"{self.name} returned non-finite values", node=int(bad))
        return out


class PointFunction:
    """A terminal-cost callable phi(x_f, tf) evaluated at a single point."""

    def __init__(self, fn: Callable, shape: Tuple[int, ...], name: str):
        self.fn = fn
        self.shape = tuple(shape)
        self.name = name

    def __call__(self, x: np.ndarray, tf: float) -> Union[float, np.ndarray]:
        raw = np.asarray(self.fn(np.asarray(x, dtype=float), float(tf)), dtype=float)
        try:
            out = np.array(np.broadcast_to(raw, self.shape))
        except ValueError as exc:
            raise DimensionError(f"{self.name} returned shape {raw.shape}, expected {self.shape}") from exc
        if not np.all(np.isfinite(out)):
            raise EvaluationError(f"{self.name} returned non-finite values", sample=f"tf={tf:g}")
        return float(out) if out.ndim == 0 else out

    def batched(self) -> Callable:
        """Batch wrapper over (N, n) states and (N,) terminal times."""

        def _call(x: np.ndarray, tf: np.ndarray) -> np.ndarray:
            return np.stack([np.asarray(self(x[i], tf[i]), dtype=float) for i in range(len(x))])

        return _call


def _wrap(fn: Optional[Callable], shape: Tuple[int, ...], name: str, vectorized: bool) -> Optional[NodalFunction]:
    if fn is None or isinstance(fn, NodalFunction):
        return fn
    return NodalFunction(fn, shape, name, vectorized)


def _wrap_point(fn: Optional[Callable], shape: Tuple[int, ...], name: str) -> Optional[PointFunction]:
    if fn is None or isinstance(fn, PointFunction):
        return fn
    return PointFunction(fn, shape, name)


# ---------------------------------------------------------------------------
# Finite differences
# ---------------------------------------------------------------------------


def _step(values: np.ndarray, rel: float, floor: float) -> np.ndarray:
    return np.maximum(floor, rel * np.abs(values))


def _perturbed(args: Sequence[np.ndarray], index: int, column: Optional[int], delta: np.ndarray) -> List[np.ndarray]:
    shifted = [np.array(arg, dtype=float, copy=True) for arg in args]
    if column is None:
        shifted[index] = shifted[index] + delta
    else:
        shifted[index][:, column] = shifted[index][:, column] + delta
    return shifted


def central_partial(
    fn: Callable,
    args: Sequence[np.ndarray],
    index: int,
    rel: float = FD_REL_STEP,
    floor: float = FD_MIN_STEP,
) -> np.ndarray:
    """
    Central-difference partial of a batched function.

    The argument at ``index`` is perturbed one component at a time across all
    nodes simultaneously, with a per-node step max(floor, rel * |value|).
    Arguments of shape (N,) are scalars per node and add no trailing axis;
    arguments of shape (N, k) add a trailing axis of length k.

    Args:
        fn (Callable): Batched function of ``args``.
        args (Sequence[np.ndarray]): Evaluation point; leading axis is the node axis.
        index (int): Which argument to differentiate.
        rel (float): Relative step factor.
        floor (float): Minimum step.

    Returns:
        np.ndarray: Partial derivative with shape (N,) + out_shape [+ (k,)].
    """
    arg = np.asarray(args[index], dtype=float)
    columns: List[Optional[int]] = [None] if arg.ndim == 1 else list(range(arg.shape[1]))
    slopes = []
    for column in columns:
        base = arg if column is None else arg[:, column]
        delta = _step(base, rel, floor)
        upper = np.asarray(fn(*_perturbed(args, index, column, delta)), dtype=float)
        lower = np.asarray(fn(*_perturbed(args, index, column, -delta)), dtype=float)
        scale = (2.0 * delta).reshape((-1,) + (1,) * (upper.ndim - 1))
        slopes.append((upper - lower) / scale)
    if arg.ndim == 1:
        return slopes[0]
    return np.stack(slopes, axis=-1)


def _five_point_partial(fn: Callable, args: Sequence[np.ndarray], index: int) -> np.ndarray:
    arg = np.asarray(args[index], dtype=float)
    columns: List[Optional[int]] = [None] if arg.ndim == 1 else list(range(arg.shape[1]))
    slopes = []
    for column in columns:
        base = arg if column is None else arg[:, column]
        delta = _step(base, ORACLE_REL_STEP, ORACLE_MIN_STEP)
        samples = {
            k: np.asarray(fn(*_perturbed(args, index, column, k * delta)), dtype=float)
            for k in (-2, -1, 1, 2)
        }
        scale = (12.0 * delta).reshape((-1,) + (1,) * (samples[1].ndim - 1))
        slopes.append((-samples[2] + 8.0 * samples[1] - 8.0 * samples[-1] + samples[-2]) / scale)
    if arg.ndim == 1:
        return slopes[0]
    return np.stack(slopes, axis=-1)


def partial_function(fn: Callable, index: int, rel: float = FD_REL_STEP, floor: float = FD_MIN_STEP) -> Callable:
    """Return a callable evaluating the central-difference partial of ``fn``."""

    def _partial(*args: np.ndarray) -> np.ndarray:
        return central_partial(fn, args, index, rel, floor)

    return _partial


@dataclass
class DerivativeBundle:
    """
    Generated first and second partials of one function.

    Attributes:
        first (Dict[str, Callable]): Partial with respect to each argument name.
        second (Dict[Tuple[str, str], Callable]): Mixed partials; key (a, b)
            differentiates the a-partial with respect to b.
    """

    first: Dict[str, Callable] = field(default_factory=dict)
    second: Dict[Tuple[str, str], Callable] = field(default_factory=dict)

    def __getitem__(self, key: Union[str, Tuple[str, str]]) -> Callable:
        if isinstance(key, tuple):
            return self.second[key]
        return self.first[key]


def finite_difference_bundle(fn: Callable, dims: Union[Mapping[str, int], Sequence[Tuple[str, int]]]) -> DerivativeBundle:
    """
    Generate all first and second partials of a batched function.

    Args:
        fn (Callable): Function of the arguments named in ``dims``, batched over
            a leading node axis.
        dims: Argument names with their component counts, in call order. A
            count of 0 marks a scalar-per-node argument such as t.

    Returns:
        DerivativeBundle: Callables taking the same arguments as ``fn``.
    """
    items = list(dims.items()) if isinstance(dims, Mapping) else list(dims)
    names = [name for name, _ in items]
    bundle = DerivativeBundle()
    for index, name in enumerate(names):
        bundle.first[name] = partial_function(fn, index)
    for i, first_name in enumerate(names):
        coarse = partial_function(fn, i, FD2_REL_STEP, FD2_MIN_STEP)
        for j, second_name in enumerate(names):
            bundle.second[(first_name, second_name)] = partial_function(coarse, j, FD2_REL_STEP, FD2_MIN_STEP)
    return bundle


# ---------------------------------------------------------------------------
# Variational problems
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class VariationalProblem:
    """
    Minimize J = integral of F(y, ydot, t) over [t0, tf].

    Attributes:
        n (int): Dimension of y.
        F (Callable): Integrand, batched; returns shape (N,).
        F_y (Callable): dF/dy, shape (N, n).
        F_ydot (Callable): dF/dydot, shape (N, n).
        boundary (BoundarySpec): Fixed or free tags for each component at both ends.
        t0 (float): Initial time.
        tf (float): Terminal time.
        name (str): Label used in logs and output.
        vectorized (bool): Whether the callables accept whole grids.
        F_ydot_y, F_ydot_ydot, F_ydot_t (Optional[Callable]): Partials of F_ydot,
            used only by the chain-rule cross-check.
    """

    n: int
    F: Callable
    F_y: Callable
    F_ydot: Callable
    boundary: BoundarySpec
    t0: float
    tf: float
    name: str = "variational"
    vectorized: bool = True
    F_ydot_y: Optional[Callable] = None
    F_ydot_ydot: Optional[Callable] = None
    F_ydot_t: Optional[Callable] = None

    def __post_init__(self):
        if self.boundary.n != self.n:
            raise DimensionError(f"Boundary spec covers {self.boundary.n} components, problem has n={self.n}")
        if self.tf <= self.t0:
            raise ConfigError(f"Horizon must be increasing, got [{self.t0}, {self.tf}]")
        n, v = self.n, self.vectorized
        object.__setattr__(self, "F", _wrap(self.F, (), "F", v))
        object.__setattr__(self, "F_y", _wrap(self.F_y, (n,), "F_y", v))
        object.__setattr__(self, "F_ydot", _wrap(self.F_ydot, (n,), "F_ydot", v))
        object.__setattr__(self, "F_ydot_y", _wrap(self.F_ydot_y, (n, n), "F_ydot_y", v))
        object.__setattr__(self, "F_ydot_ydot", _wrap(self.F_ydot_ydot, (n, n), "F_ydot_ydot", v))
        object.__setattr__(self, "F_ydot_t", _wrap(self.F_ydot_t, (n,), "F_ydot_t", v))

    @property
    def has_chain_rule_partials(self) -> bool:
        return None not in (self.F_ydot_y, self.F_ydot_ydot, self.F_ydot_t)


# ---------------------------------------------------------------------------
# Optimal control problems
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OcpDerivatives:
    """
    Partial derivatives of f, L and phi.

    Any entry left as None is generated by central differences when the
    owning OcpProblem is built: first partials from the parent function,
    second partials from the corresponding first partial with a wider step.
    """

    f_x: Optional[Callable] = None
    f_u: Optional[Callable] = None
    f_t: Optional[Callable] = None
    L_x: Optional[Callable] = None
    L_u: Optional[Callable] = None
    L_t: Optional[Callable] = None
    f_xx: Optional[Callable] = None
    f_xu: Optional[Callable] = None
    f_uu: Optional[Callable] = None
    f_xt: Optional[Callable] = None
    f_ut: Optional[Callable] = None
    L_xx: Optional[Callable] = None
    L_xu: Optional[Callable] = None
    L_uu: Optional[Callable] = None
    L_xt: Optional[Callable] = None
    L_ut: Optional[Callable] = None
    phi_x: Optional[Callable] = None
    phi_tf: Optional[Callable] = None
    phi_xtf: Optional[Callable] = None
    phi_tftf: Optional[Callable] = None

    def supplied(self) -> List[str]:
        return [f.name for f in fields(self) if getattr(self, f.name) is not None]


# (name, parent, argument index in (x, u, t)) for nodal partials
_FIRST_PARTIALS = (
    ("f_x", "f", 0), ("f_u", "f", 1), ("f_t", "f", 2),
    ("L_x", "L", 0), ("L_u", "L", 1), ("L_t", "L", 2),
)
_SECOND_PARTIALS = (
    ("f_xx", "f_x", 0), ("f_xu", "f_x", 1), ("f_uu", "f_u", 1),
    ("f_xt", "f_x", 2), ("f_ut", "f_u", 2),
    ("L_xx", "L_x", 0), ("L_xu", "L_x", 1), ("L_uu", "L_u", 1),
    ("L_xt", "L_x", 2), ("L_ut", "L_u", 2),
)
# (name, parent, argument index in (x_f, tf)) for terminal-cost partials
_TERMINAL_PARTIALS = (
    ("phi_x", "phi", 0), ("phi_tf", "phi", 1),
    ("phi_xtf", "phi_x", 1), ("phi_tftf", "phi_tf", 1),
)


@dataclass(frozen=True, eq=False)
class OcpProblem:
    """
    Bolza optimal control problem.

    Minimize phi(x(tf), tf) + integral of L(x, u, t) subject to
    xdot = f(x, u, t), x(t0) = x0 and the terminal conditions.

    Attributes:
        n (int): State dimension.
        m (int): Control dimension.
        f (Callable): Dynamics, batched; returns (N, n).
        L (Callable): Running cost, batched; returns (N,).
        phi (Callable): Terminal cost phi(x_f, tf), single point.
        derivatives (OcpDerivatives): Analytic partials; gaps are filled by
            finite differences.
        x0 (Sequence[float]): Initial state.
        terminal_state (Tuple[BoundaryTag, ...]): Fixed or free tag per state.
        terminal_time (BoundaryTag): Fixed(tf) or Free(guess).
        t0 (float): Initial time.
        name (str): Label used in logs and output.
        vectorized (bool): Whether nodal callables accept whole grids.
    """

    n: int
    m: int
    f: Callable
    L: Callable
    phi: Callable
    derivatives: OcpDerivatives
    x0: Sequence[float]
    terminal_state: Tuple[BoundaryTag, ...]
    terminal_time: BoundaryTag
    t0: float = 0.0
    name: str = "ocp"
    vectorized: bool = True

    def __post_init__(self):
        n, m, v = self.n, self.m, self.vectorized
        x0 = np.asarray(self.x0, dtype=float)
        if x0.shape != (n,):
            raise DimensionError(f"x0 must have {n} entries, got shape {x0.shape}")
        if not np.all(np.isfinite(x0)):
            raise ConfigError("x0 must be finite")
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "terminal_state", tuple(self.terminal_state))
        if len(self.terminal_state) != n:
            raise DimensionError(f"terminal_state needs {n} tags, got {len(self.terminal_state)}")
        if isinstance(self.terminal_time, Free) and self.terminal_time.guess is None:
            raise ConfigError("A free terminal time needs an initial guess")
        if not isinstance(self.terminal_time, (Fixed, Free)):
            raise ConfigError(f"terminal_time must be Fixed or Free, got {self.terminal_time!r}")
        if self.tf_initial <= self.t0:
            raise ConfigError(f"Terminal time {self.tf_initial} must exceed t0 = {self.t0}")

        shapes = {
            "f": (n,), "L": (),
            "f_x": (n, n), "f_u": (n, m), "f_t": (n,),
            "L_x": (n,), "L_u": (m,), "L_t": (),
            "f_xx": (n, n, n), "f_xu": (n, n, m), "f_uu": (n, m, m),
            "f_xt": (n, n), "f_ut": (n, m),
            "L_xx": (n, n), "L_xu": (n, m), "L_uu": (m, m),
            "L_xt": (n,), "L_ut": (m,),
        }
        object.__setattr__(self, "f", _wrap(self.f, shapes["f"], "f", v))
        object.__setattr__(self, "L", _wrap(self.L, shapes["L"], "L", v))
        object.__setattr__(self, "phi", _wrap_point(self.phi, (), "phi"))

        resolved: Dict[str, Callable] = {"f": self.f, "L": self.L}
        generated: List[str] = []
        for group in (_FIRST_PARTIALS, _SECOND_PARTIALS):
            for name, parent, index in group:
                supplied = getattr(self.derivatives, name)
                if supplied is None:
                    generated.append(name)
                    steps = (FD2_REL_STEP, FD2_MIN_STEP) if group is _SECOND_PARTIALS else (FD_REL_STEP, FD_MIN_STEP)
                    supplied = partial_function(resolved[parent], index, *steps)
                    resolved[name] = NodalFunction(supplied, shapes[name], name, vectorized=True)
                else:
                    resolved[name] = _wrap(supplied, shapes[name], name, v)

        point_shapes = {"phi_x": (n,), "phi_tf": (), "phi_xtf": (n,), "phi_tftf": ()}
        resolved["phi"] = self.phi
        for name, parent, index in _TERMINAL_PARTIALS:
            supplied = getattr(self.derivatives, name)
            if supplied is None:
                generated.append(name)
                parent_fn = resolved[parent]
                batched = parent_fn.batched()
                steps = (FD_REL_STEP, FD_MIN_STEP) if parent == "phi" else (FD2_REL_STEP, FD2_MIN_STEP)
                partial = partial_function(batched, index, *steps)

                def _point(x, tf, _partial=partial):
                    return _partial(np.asarray(x, dtype=float)[None, :], np.array([float(tf)]))[0]

                resolved[name] = PointFunction(_point, point_shapes[name], name)
            else:
                resolved[name] = _wrap_point(supplied, point_shapes[name], name)

        if generated:
            logger.info(f"Problem {self.name}: finite-difference partials for {', '.join(generated)}")
        object.__setattr__(
            self,
            "derivatives",
            replace(self.derivatives, **{f.name: resolved[f.name] for f in fields(OcpDerivatives)}),
        )
        object.__setattr__(self, "_generated", tuple(generated))

    @property
    def generated_partials(self) -> Tuple[str, ...]:
        """Names of partials that were produced by finite differences."""
        return getattr(self, "_generated", ())

    @property
    def free_tf(self) -> bool:
        return isinstance(self.terminal_time, Free)

    @property
    def tf_initial(self) -> float:
        if isinstance(self.terminal_time, Fixed):
            return self.terminal_time.value
        return float(self.terminal_time.guess)

    @property
    def terminal_fixed_mask(self) -> np.ndarray:
        return np.array([isinstance(tag, Fixed) for tag in self.terminal_state], dtype=bool)

    @property
    def terminal_values(self) -> np.ndarray:
        """Prescribed terminal states, NaN where free."""
        return np.array(
            [tag.value if isinstance(tag, Fixed) else np.nan for tag in self.terminal_state]
        )

    @property
    def boundary(self) -> BoundarySpec:
        """The state boundary conditions in BoundarySpec form."""
        return BoundarySpec(start=tuple(Fixed(v) for v in self.x0), end=self.terminal_state)


# ---------------------------------------------------------------------------
# Verification
# ---------------------------------------------------------------------------


@dataclass
class PartialsReport:
    """
    Outcome of a derivative check.

    Attributes:
        rel_tol (float): Acceptance threshold.
        errors (Dict[str, float]): Max relative error per partial.
        worst_entries (Dict[str, str]): Entry with the largest error per partial.
    """

    rel_tol: float
    errors: Dict[str, float] = field(default_factory=dict)
    worst_entries: Dict[str, str] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(error <= self.rel_tol for error in self.errors.values())

    def failures(self) -> List[str]:
        """Entries whose partial exceeds the tolerance, e.g. 'f_x[0,1]'."""
        return [self.worst_entries[name] for name, error in self.errors.items() if error > self.rel_tol]

    def record(self, name: str, analytic: np.ndarray, oracle: np.ndarray) -> None:
        analytic = np.asarray(analytic, dtype=float)
        oracle = np.asarray(oracle, dtype=float)
        if analytic.shape != oracle.shape:
            raise DimensionError(f"{name} has shape {analytic.shape}, expected {oracle.shape}")
        rel = np.abs(analytic - oracle) / np.maximum(1.0, np.abs(oracle))
        worst = float(rel.max()) if rel.size else 0.0
        if worst >= self.errors.get(name, -1.0):
            self.errors[name] = worst
            index = np.unravel_index(int(np.argmax(rel)), rel.shape) if rel.size else ()
            # drop the sample axis
            entry = index[1:]
            self.worst_entries[name] = f"{name}[{','.join(str(i) for i in entry)}]" if entry else name

    def summary(self) -> str:
        status = "passed" if self.passed else f"failed ({', '.join(self.failures())})"
        lines = [f"Partials check {status} at rel_tol={self.rel_tol:g}"]
        for name in sorted(self.errors):
            lines.append(f"  {name}: {self.errors[name]:.3e}")
        return "\n".join(lines)


def _check_variational(problem: VariationalProblem, point: Tuple, report: PartialsReport) -> None:
    y, ydot, t = point
    args = (np.atleast_2d(np.asarray(y, dtype=float)), np.atleast_2d(np.asarray(ydot, dtype=float)),
            np.atleast_1d(np.asarray(t, dtype=float)))
    report.record("F_y", problem.F_y(*args), _five_point_partial(problem.F, args, 0))
    report.record("F_ydot", problem.F_ydot(*args), _five_point_partial(problem.F, args, 1))
    if problem.F_ydot_y is not None:
        report.record("F_ydot_y", problem.F_ydot_y(*args), _five_point_partial(problem.F_ydot, args, 0))
    if problem.F_ydot_ydot is not None:
        report.record("F_ydot_ydot", problem.F_ydot_ydot(*args), _five_point_partial(problem.F_ydot, args, 1))
    if problem.F_ydot_t is not None:
        report.record("F_ydot_t", problem.F_ydot_t(*args), _five_point_partial(problem.F_ydot, args, 2))


def _check_ocp(problem: OcpProblem, point: Tuple, report: PartialsReport) -> None:
    x, u, t = point
    args = (np.atleast_2d(np.asarray(x, dtype=float)), np.atleast_2d(np.asarray(u, dtype=float)),
            np.atleast_1d(np.asarray(t, dtype=float)))
    d = problem.derivatives
    parents = {"f": problem.f, "L": problem.L}
    for name, parent, index in _FIRST_PARTIALS + _SECOND_PARTIALS:
        parent_fn = parents[parent] if parent in parents else getattr(d, parent)
        report.record(name, getattr(d, name)(*args), _five_point_partial(parent_fn, args, index))

    terminal = (args[0], args[2])
    batched = {"phi": problem.phi.batched(), "phi_x": d.phi_x.batched(), "phi_tf": d.phi_tf.batched()}
    for name, parent, index in _TERMINAL_PARTIALS:
        analytic = getattr(d, name).batched()(*terminal)
        report.record(name, analytic, _five_point_partial(batched[parent], terminal, index))


def verify_partials(
    problem: Union[VariationalProblem, OcpProblem],
    sample_points: Sequence[Tuple],
    rel_tol: float = 1e-6,
) -> PartialsReport:
    """
    Compare every partial of a problem against a five-point finite-difference oracle.

    Sample points are (y, ydot, t) for variational problems and (x, u, t)
    for optimal control problems; terminal-cost partials are checked at
    (x, tf = t). The error measure is |analytic - oracle| / max(1, |oracle|).

    Args:
        problem: The problem whose derivative bundle is checked.
        sample_points: Points inside the problem domain.
        rel_tol (float): Acceptance threshold.

    Returns:
        PartialsReport: Max error per partial; ``passed`` iff all are within rel_tol.

    Raises:
        EvaluationError: If a function is non-finite at a sample; the error names the sample.
    """
    report = PartialsReport(rel_tol=rel_tol)
    checker = _check_variational if isinstance(problem, VariationalProblem) else _check_ocp
    for number, point in enumerate(sample_points):
        try:
            checker(problem, point, report)
        except EvaluationError as exc:
            raise EvaluationError(
                f"Non-finite evaluation while checking partials: {exc.args[0]}",
                sample=f"#{number} {tuple(np.round(np.atleast_1d(p), 6).tolist() for p in point)}",
            ) from exc
    level = logging.INFO if report.passed else logging.WARNING
    logger.log(level, f"Partials check for {getattr(problem, 'name', 'problem')}: "
                      f"{'passed' if report.passed else 'failed'}")
    return report
