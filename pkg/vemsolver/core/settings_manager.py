"""
Settings manager.

This module reads and writes the solver defaults kept in the INI file
config/settings.ini. Values from the file sit below per-case JSON configs
and command-line flags in the precedence order.
"""

import configparser
import logging
import os
from pathlib import Path
from typing import Any, Dict, Optional

# Configure logger
logger = logging.getLogger(__name__)

# Base directory of the project
BASE_DIR = Path(__file__).parent.parent.parent

# Settings file path
SETTINGS_FILE = Path(os.getenv("VEM_SETTINGS_FILE", str(BASE_DIR / "config" / "settings.ini")))

DEFAULT_SETTINGS: Dict[str, Dict[str, Any]] = {
    "general": {
        "app_name": "vemsolver",
        "app_version": "0.1.0",
        "env": "development",
    },
    "solver": {
        "rel_tol": 1e-6,
        "abs_tol": 1e-8,
        "residual_tol": 1e-6,
        "tau_max": 1000.0,
        "snapshot_every": 1.0,
        "max_steps": 200000,
        "descent_slack": 1e-9,
        "descent_abort_factor": 100.0,
        "newton_max_iter": 10,
    },
    "output": {
        "dir": "results",
    },
    "log": {
        "level": "INFO",
    },
}

_FLOAT_KEYS = ("rel_tol", "abs_tol", "residual_tol", "tau_max", "snapshot_every",
               "descent_slack", "descent_abort_factor")
_INT_KEYS = ("max_steps", "newton_max_iter")


def initialize_settings_file(path: Optional[Path] = None) -> Path:
    """
    Initialize the settings file with default values if it doesn't exist.

    Args:
        path (Optional[Path]): Settings file to create. Defaults to SETTINGS_FILE.

    Returns:
        Path: The settings file location.
    """
    path = Path(path or SETTINGS_FILE)
    if path.exists():
        logger.debug(f"Settings file found at {path}")
        return path

    logger.info(f"Settings file not found. Creating new settings file at {path}")
    config = configparser.ConfigParser()
    for section, values in DEFAULT_SETTINGS.items():
        config[section] = {key: str(value) for key, value in values.items()}

    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w+") as configfile:
        config.write(configfile)
    return path


def _read(path: Optional[Path] = None) -> configparser.ConfigParser:
    config = configparser.ConfigParser()
    config.read(Path(path or SETTINGS_FILE))
    return config


def get_general_settings(path: Optional[Path] = None) -> Dict[str, Any]:
    """
    Get all general settings.

    Returns:
        Dict[str, Any]: Dictionary containing all general settings.
    """
    config = _read(path)
    if "general" not in config:
        return dict(DEFAULT_SETTINGS["general"])
    return dict(config["general"])


def get_solver_settings(path: Optional[Path] = None) -> Dict[str, Any]:
    """
    Get the solver defaults with their proper types.

    Missing keys fall back to DEFAULT_SETTINGS so that an older settings
    file keeps working after new options are introduced.

    Args:
        path (Optional[Path]): Settings file to read. Defaults to SETTINGS_FILE.

    Returns:
        Dict[str, Any]: Typed solver settings.
    """
    settings = dict(DEFAULT_SETTINGS["solver"])
    config = _read(path)
    if "solver" not in config:
        return settings

    section = config["solver"]
    for key in _FLOAT_KEYS:
        if key in section:
            settings[key] = section.getfloat(key)
    for key in _INT_KEYS:
        if key in section:
            settings[key] = section.getint(key)
    return settings


def get_output_dir(path: Optional[Path] = None) -> str:
    """Get the default output directory for run results."""
    config = _read(path)
    return config.get("output", "dir", fallback=DEFAULT_SETTINGS["output"]["dir"])


def update_solver_settings(settings: Dict[str, Any], path: Optional[Path] = None) -> None:
    """
    Update solver settings in the settings file.

    Args:
        settings (Dict[str, Any]): Keys to overwrite in the [solver] section.
        path (Optional[Path]): Settings file to write. Defaults to SETTINGS_FILE.
    """
    path = Path(path or SETTINGS_FILE)
    config = _read(path)
    if "solver" not in config:
        config["solver"] = {}
    for key, value in settings.items():
        config["solver"][key] = str(value)
    with open(path, "w") as configfile:
        config.write(configfile)
    logger.info(f"Updated solver settings in {path}")
