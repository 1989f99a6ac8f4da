"""
Base case class for benchmark problems.

This module defines the BaseCase abstract class that every built-in or
library-registered benchmark must inherit from, and the BenchmarkCase
record a case builds: the problem, its defaults and its reference
solution. Cases carry a JSON configuration under config/cases/ that is
deep-merged over the defaults declared in ``config_schema``.
"""

import abc
import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple, Union

import numpy as np

from vemsolver.core.config import CASES_CONFIG_DIR
from vemsolver.core.exceptions import ConfigError
from vemsolver.flows.cov_flow import CovGains
from vemsolver.flows.zs_flow import FlowState, ZsGains
from vemsolver.models.grid import Profile, TimeGrid
from vemsolver.models.problem_defs import OcpProblem, VariationalProblem
from vemsolver.utils.helpers import deep_merge

# Configure logger
logger = logging.getLogger(__name__)

Problem = Union[VariationalProblem, OcpProblem]
Guess = Union[Profile, FlowState]


@dataclass
class BenchmarkCase:
    """
    A benchmark problem with its defaults and reference solution.

    Attributes:
        name (str): Registry name.
        problem (Problem): The problem definition.
        reference (Optional[Callable]): t -> (len(t), width) exact values of
            every solution component, None when no closed form exists.
        reference_tf (Optional[float]): Optimal terminal time when tf is free.
        default_gains (Union[CovGains, ZsGains]): Gains of the shipped run.
        default_guess (Callable[[TimeGrid], Guess]): Initial guess on a grid.
        default_n_points (int): Grid size of the shipped run.
        default_method (str): 'rk45' or 'stiff'.
        default_tau_max (Optional[float]): Horizon of the shipped run.
        default_snapshot_every (Optional[float]): Diagnostics interval of the shipped run.
        description (str): One-line description.
    """

    name: str
    problem: Problem
    reference: Optional[Callable[[np.ndarray], np.ndarray]]
    reference_tf: Optional[float]
    default_gains: Union[CovGains, ZsGains]
    default_guess: Callable[[TimeGrid], Guess]
    default_n_points: int
    default_method: str = "rk45"
    default_tau_max: Optional[float] = None
    default_snapshot_every: Optional[float] = None
    description: str = ""

    @property
    def is_ocp(self) -> bool:
        return isinstance(self.problem, OcpProblem)

    @property
    def has_reference(self) -> bool:
        return self.reference is not None

    def width(self) -> int:
        """Number of solution components per node."""
        if isinstance(self.problem, OcpProblem):
            return 2 * self.problem.n + self.problem.m
        return self.problem.n

    def max_error(self, times: np.ndarray, values: np.ndarray) -> Optional[float]:
        """Max nodal error against the reference, None without a reference."""
        if self.reference is None:
            return None
        exact = np.asarray(self.reference(np.asarray(times, dtype=float)), dtype=float)
        return float(np.abs(np.asarray(values) - exact.reshape(np.shape(values))).max())


class BaseCase(abc.ABC):
    """
    Abstract base class for all benchmark cases.

    Attributes:
        name (str): Registry name, also the config file stem.
        display_name (str): Human-readable name.
        description (str): One-line description.
        version (str): Case version.
        category (str): 'variational' or 'optimal_control'.
        tags (List[str]): Free-form tags.
        config_schema (Dict[str, Any]): Keys with type, description and default.
        has_config (bool): Whether the case reads a JSON config.
        config_dir (Path): Directory holding the JSON configs.
    """

    def __init__(self):
        self.name = "base_case"
        self.display_name = "Base Case"
        self.description = "Base case class. Do not use directly."
        self.version = "0.1.0"
        self.category = "misc"
        self.tags: List[str] = []
        self.config_schema: Dict[str, Any] = {}
        self.has_config = False
        self.config: Dict[str, Any] = {}
        self.config_dir = Path(CASES_CONFIG_DIR)
        self.initialize()

    def initialize(self) -> None:
        """Set case metadata and schema; overridden by subclasses."""

    @abc.abstractmethod
    def build(self, config: Dict[str, Any]) -> BenchmarkCase:
        """
        Build the benchmark from a resolved configuration.

        Args:
            config (Dict[str, Any]): Schema defaults with the JSON config merged in.

        Returns:
            BenchmarkCase: The case.
        """

    def case(self, overrides: Optional[Dict[str, Any]] = None) -> BenchmarkCase:
        """Build the benchmark from the stored config, optionally overridden."""
        config = self.load_config() if self.has_config else self.get_default_config()
        if overrides:
            config = deep_merge(config, overrides)
        valid, message = self.validate_config(config)
        if not valid:
            raise ConfigError(f"Invalid configuration for case {self.name}: {message}")
        return self.build(config)

    def get_metadata(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "display_name": self.display_name,
            "description": self.description,
            "version": self.version,
            "category": self.category,
            "tags": self.tags,
            "has_config": self.has_config,
            "config_schema": self.config_schema,
        }

    def get_config_path(self) -> Path:
        return self.config_dir / f"{self.name}_config.json"

    def load_config(self) -> Dict[str, Any]:
        """
        Load the case configuration from its JSON file.

        A missing file is created from the schema defaults. Values in the
        file override the defaults key by key.

        Raises:
            ConfigError: If the file exists but is not valid JSON.
        """
        if not self.has_config:
            return {}

        config_path = self.get_config_path()
        default_config = self.get_default_config()
        if not config_path.exists():
            self.save_config(default_config)
            self.config = default_config
            return self.config

        try:
            with open(config_path, "r") as f:
                loaded_config = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"Cannot read configuration {config_path}: {e}") from e
        if not isinstance(loaded_config, dict):
            raise ConfigError(f"Configuration {config_path} must hold a JSON object")

        self.config = deep_merge(default_config, loaded_config)
        logger.debug(f"Loaded configuration for case: {self.name}")
        return self.config

    def save_config(self, config: Dict[str, Any]) -> bool:
        """Write the configuration to the case's JSON file."""
        if not self.has_config:
            return False
        config_path = self.get_config_path()
        try:
            os.makedirs(config_path.parent, exist_ok=True)
            with open(config_path, "w") as f:
                json.dump(config, f, indent=4)
        except OSError as e:
            logger.error(f"Error saving configuration for case {self.name}: {e}")
            return False
        self.config = config
        logger.info(f"Saved configuration for case: {self.name}")
        return True

    def get_default_config(self) -> Dict[str, Any]:
        """Defaults derived from ``config_schema``."""
        defaults: Dict[str, Any] = {}
        for key, properties in self.config_schema.items():
            if "default" in properties:
                value = properties["default"]
                defaults[key] = dict(value) if isinstance(value, dict) else value
        return defaults

    def validate_config(self, config: Dict[str, Any]) -> Tuple[bool, Optional[str]]:
        """Check required keys and unknown keys against the schema."""
        for key, properties in self.config_schema.items():
            if properties.get("required", False) and key not in config:
                return False, f"Missing required configuration field: {key}"
        unknown = sorted(set(config) - set(self.config_schema))
        if unknown:
            return False, f"Unknown configuration fields: {', '.join(unknown)}"
        return True, None


def common_schema(n_points: int, gains: Dict[str, Any], method: str,
                  tau_max: float, snapshot_every: float) -> Dict[str, Any]:
    """Schema entries shared by every built-in case."""
    return {
        "n_points": {"type": "integer", "description": "Grid nodes N", "default": n_points},
        "gains": {"type": "object", "description": "Flow gains (K scalar or list, k_tf)", "default": gains},
        "method": {"type": "string", "description": "Integrator: rk45 or stiff", "default": method},
        "tau_max": {"type": "number", "description": "Variation-time horizon", "default": tau_max},
        "snapshot_every": {"type": "number", "description": "Diagnostics interval in tau",
                           "default": snapshot_every},
    }


def cov_gains_from_config(gains: Dict[str, Any]) -> CovGains:
    """CovGains from the ``gains`` entry of a case config."""
    try:
        return CovGains(
            K=gains.get("K", 1.0),
            variant=gains.get("variant", "asymptotic"),
            epsilon=float(gains.get("epsilon", 1e-3)),
        )
    except (TypeError, ValueError) as e:
        raise ConfigError(f"Invalid gains {gains}: {e}") from e


def zs_gains_from_config(gains: Dict[str, Any]) -> ZsGains:
    """ZsGains from the ``gains`` entry of a case config."""
    try:
        return ZsGains(
            K=gains.get("K", 1.0),
            k_tf=float(gains.get("k_tf", 1.0)),
            convective=bool(gains.get("convective", False)),
        )
    except (TypeError, ValueError) as e:
        raise ConfigError(f"Invalid gains {gains}: {e}") from e
