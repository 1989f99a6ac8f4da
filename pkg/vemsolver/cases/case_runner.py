"""
Case Runner.

Discovers every BaseCase subclass in the builtins package and keeps them
in a name-indexed registry. Library code can register further cases at
runtime; the CLI resolves case names through this registry.
"""

import importlib
import inspect
import logging
import pkgutil
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from vemsolver.cases.base import BaseCase
from vemsolver.core.exceptions import UnknownCaseError

# Configure logger
logger = logging.getLogger(__name__)

BUILTINS_PACKAGE = "vemsolver.cases.builtins"


class CaseRunner:
    """
    Registry of benchmark cases.

    Attributes:
        cases (Dict[str, BaseCase]): Registered cases by name.
        builtins_dir (Path): Directory scanned for built-in cases.
    """

    _instance = None

    def __new__(cls):
        """Create a new CaseRunner instance if one doesn't exist."""
        if cls._instance is None:
            cls._instance = super(CaseRunner, cls).__new__(cls)
            cls._instance._initialized = False
        return cls._instance

    def __init__(self):
        if self._initialized:
            return
        self.cases: Dict[str, BaseCase] = {}
        self.builtins_dir = Path(__file__).parent / "builtins"
        self.load_cases()
        self._initialized = True

    def load_cases(self) -> None:
        """Import every module of the builtins package and register its cases."""
        logger.debug(f"Loading cases from {self.builtins_dir}")
        self.cases = {}
        for info in pkgutil.iter_modules([str(self.builtins_dir)]):
            module_path = f"{BUILTINS_PACKAGE}.{info.name}"
            try:
                module = importlib.import_module(module_path)
            except Exception as e:
                logger.error(f"Error importing case module {module_path}: {e}", exc_info=True)
                continue

            for name, obj in inspect.getmembers(module, inspect.isclass):
                if not issubclass(obj, BaseCase) or obj is BaseCase or inspect.isabstract(obj):
                    continue
                if obj.__module__ != module.__name__:
                    continue
                try:
                    self.register(obj())
                except Exception as e:
                    logger.error(f"Error instantiating case {name}: {e}", exc_info=True)

        if self.cases:
            logger.debug(f"Loaded {len(self.cases)} cases: {sorted(self.cases)}")
        else:
            logger.warning("No cases were loaded from the builtins package")

    def register(self, case: BaseCase) -> None:
        """
        Add a case to the registry, replacing any case of the same name.

        Raises:
            ValueError: If the case has no usable name.
        """
        if not getattr(case, "name", None) or case.name == "base_case":
            raise ValueError(f"Case {type(case).__name__} has invalid name: {getattr(case, 'name', None)}")
        if case.name in self.cases:
            logger.warning(f"Replacing registered case: {case.name}")
        self.cases[case.name] = case
        logger.debug(f"Registered case: {case.name}")

    def get_cases(self) -> List[Dict[str, Any]]:
        """Metadata of every registered case, sorted by name."""
        return [self.cases[name].get_metadata() for name in sorted(self.cases)]

    def get_case(self, case_name: str) -> BaseCase:
        """
        Get a case by name.

        Raises:
            UnknownCaseError: If no case has that name.
        """
        case = self.cases.get(case_name)
        if case is None:
            raise UnknownCaseError(f"unknown case: {case_name} (available: {', '.join(sorted(self.cases))})")
        return case

    def reload_cases(self) -> None:
        """Drop cached builtin modules and load them again."""
        for name in list(sys.modules):
            if name.startswith(f"{BUILTINS_PACKAGE}."):
                del sys.modules[name]
        self.load_cases()


def get_case_runner() -> CaseRunner:
    return CaseRunner()


def get_case_spec(case_name: str, overrides: Optional[Dict[str, Any]] = None):
    """Build the BenchmarkCase registered under ``case_name``."""
    return get_case_runner().get_case(case_name).case(overrides)
