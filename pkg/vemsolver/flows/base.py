"""
Base flow class.

A flow is the semi-discretized variation-evolution system: nodal values of
all solution components (plus the terminal time when it is free) evolve in
variation time tau under a right-hand side assembled from the problem.
This module defines the BaseFlow interface every flow implements and the
FlowLayout that maps between node-indexed arrays and the flat vector the
integrators work on.
"""

import abc
import logging
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from vemsolver.core.exceptions import DimensionError, EvaluationError
from vemsolver.models.grid import TimeGrid

# Configure logger
logger = logging.getLogger(__name__)


class FlowLayout:
    """
    Mapping between (N, width) nodal arrays and the integrated flat vector.

    Pinned entries are excluded from the flat vector and restored from a
    template on unpacking, so they stay bit-identical for the whole solve.

    Attributes:
        n_points (int): Grid nodes N.
        width (int): Components per node.
        pinned (np.ndarray): Boolean (N, width) mask of pinned entries.
        template (np.ndarray): Values used for pinned entries.
        has_tf (bool): Whether the terminal time is appended to the flat vector.
    """

    def __init__(self, pinned: np.ndarray, template: np.ndarray, has_tf: bool):
        if pinned.shape != template.shape:
            raise DimensionError(f"Pin mask {pinned.shape} does not match template {template.shape}")
        self.n_points, self.width = pinned.shape
        self.pinned = pinned.copy()
        self.template = template.copy()
        self.has_tf = has_tf
        self._free = ~self.pinned

    @property
    def free_count(self) -> int:
        return int(self._free.sum())

    @property
    def size(self) -> int:
        """Length of the integrated vector."""
        return self.free_count + int(self.has_tf)

    @property
    def total_size(self) -> int:
        """All nodal values plus tf, pinned ones included."""
        return self.n_points * self.width + int(self.has_tf)

    def pack(self, values: np.ndarray, tf: Optional[float] = None) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if values.shape != self.pinned.shape:
            raise DimensionError(f"Expected nodal array {self.pinned.shape}, got {values.shape}")
        z = values[self._free]
        if self.has_tf:
            z = np.append(z, float(tf))
        return z

    def unpack(self, z: np.ndarray) -> Tuple[np.ndarray, Optional[float]]:
        z = np.asarray(z, dtype=float)
        if z.shape != (self.size,):
            raise DimensionError(f"Expected flat state of length {self.size}, got {z.shape}")
        values = self.template.copy()
        values[self._free] = z[: self.free_count]
        tf = float(z[-1]) if self.has_tf else None
        return values, tf

    def pack_rates(self, rates: np.ndarray, tf_rate: Optional[float] = None) -> np.ndarray:
        dz = rates[self._free]
        if self.has_tf:
            dz = np.append(dz, 0.0 if tf_rate is None else float(tf_rate))
        return dz


class BaseFlow(abc.ABC):
    """
    Abstract base class for variation flows.

    Subclasses supply the nodal rates, the monitored functional and the
    optimality residual; the base class handles packing, pinning and the
    integrator-facing right-hand side.

    Attributes:
        problem: The problem definition.
        grid (TimeGrid): Grid the flow is discretized on. Not mutated here.
        gains: Gain settings of the concrete flow.
        layout (FlowLayout): Set by ``prepare``.
        component_names (List[str]): Header names of the nodal columns.
        monitored (str): Name of the functional checked for descent.
    """

    monitored = "J"

    def __init__(self, problem: Any, grid: TimeGrid, gains: Any):
        self.problem = problem
        self.grid = grid
        self.gains = gains
        self.layout: Optional[FlowLayout] = None
        self.component_names: List[str] = []
        self.evaluations = 0

    @property
    def width(self) -> int:
        return len(self.component_names)

    @property
    def has_tf(self) -> bool:
        return False

    @abc.abstractmethod
    def pinned_mask(self) -> np.ndarray:
        """Boolean (N, width) mask of values that never move."""

    @abc.abstractmethod
    def apply_pins(self, values: np.ndarray, tf: Optional[float]) -> np.ndarray:
        """Return a copy of ``values`` with every pinned entry set."""

    @abc.abstractmethod
    def nodal_rates(self, values: np.ndarray, tf: Optional[float]) -> Tuple[np.ndarray, Optional[float]]:
        """Rates for every nodal value (pinned ones included) and for tf."""

    @abc.abstractmethod
    def functional(self, values: np.ndarray, tf: Optional[float]) -> float:
        """The functional whose descent is monitored."""

    @abc.abstractmethod
    def residual_norm(self, values: np.ndarray, tf: Optional[float]) -> float:
        """Max norm of the first-order optimality residual."""

    @abc.abstractmethod
    def rate_scale(self) -> np.ndarray:
        """Per-component gain dividing the rates in the stationarity measure."""

    def tf_scale(self) -> float:
        return 1.0

    def metrics(self, values: np.ndarray, tf: Optional[float]) -> Dict[str, Optional[float]]:
        """Scalar diagnostics at a state: J, J1 and residual_norm."""
        return {
            "J": self.functional(values, tf),
            "J1": None,
            "residual_norm": self.residual_norm(values, tf),
        }

    def prepare(self, values: np.ndarray, tf: Optional[float] = None) -> np.ndarray:
        """
        Fix the layout from an initial guess and return the packed state.

        Pinned entries of the guess are overwritten by their prescribed
        values; the prescribed value always wins.

        Args:
            values (np.ndarray): (N, width) initial guess.
            tf (Optional[float]): Initial terminal time when it is free.

        Returns:
            np.ndarray: The flat initial state.
        """
        values = np.asarray(values, dtype=float)
        expected = (self.grid.n_points, self.width)
        if values.shape != expected:
            raise DimensionError(f"Initial guess must have shape {expected}, got {values.shape}")
        if self.has_tf and tf is None:
            tf = self.grid.tf
        pinned = self.apply_pins(values, tf)
        changed = np.abs(pinned - values) > 1e-12
        if np.any(changed):
            logger.debug(f"Initial guess overridden at {int(changed.sum())} pinned entries")
        self.layout = FlowLayout(self.pinned_mask(), pinned, self.has_tf)
        return self.layout.pack(pinned, tf)

    def _require_layout(self) -> FlowLayout:
        if self.layout is None:
            raise RuntimeError("Flow layout not prepared; call prepare() first")
        return self.layout

    def unpack(self, z: np.ndarray) -> Tuple[np.ndarray, Optional[float]]:
        return self._require_layout().unpack(z)

    def check_tf(self, tf: Optional[float]) -> None:
        if tf is not None and not (np.isfinite(tf) and tf > self.grid.t0):
            raise EvaluationError(f"Terminal time {tf} left the admissible range (> {self.grid.t0})")

    def rhs(self, tau: float, z: np.ndarray) -> np.ndarray:
        """Flat right-hand side d z / d tau."""
        layout = self._require_layout()
        values, tf = layout.unpack(z)
        self.check_tf(tf)
        self.evaluations += 1
        rates, tf_rate = self.nodal_rates(values, tf)
        return layout.pack_rates(rates, tf_rate)

    def stationarity(self, dz: np.ndarray) -> float:
        """Max of |rate| / gain over the integrated vector."""
        layout = self._require_layout()
        scale = np.broadcast_to(self.rate_scale(), (layout.n_points, layout.width))
        scaled = np.abs(dz[: layout.free_count]) / scale[~layout.pinned]
        value = float(scaled.max()) if scaled.size else 0.0
        if layout.has_tf:
            value = max(value, abs(float(dz[-1])) / self.tf_scale())
        return value
