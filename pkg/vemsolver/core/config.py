"""
Configuration settings.

This module provides the centralized configuration for vemsolver. It loads
settings from environment variables (optionally through a .env file at the
repository root) and exposes them as module constants and nested dicts.
"""

import os
from pathlib import Path
from typing import Any, Dict, Optional

from dotenv import load_dotenv

from vemsolver.core.settings_manager import (
    SETTINGS_FILE,
    get_output_dir,
    get_solver_settings,
    initialize_settings_file,
)

# Load environment variables from .env file if it exists
env_path = Path(__file__).parent.parent.parent / ".env"
if env_path.exists():
    load_dotenv(dotenv_path=env_path)

# Base directory of the project
BASE_DIR = Path(__file__).parent.parent.parent

# Application metadata
APP_NAME = "vemsolver"
APP_VERSION = "0.1.0"
APP_DESCRIPTION = "Variation evolving solver for variational and optimal control problems"

# Environment settings
ENV = os.getenv("VEM_ENV", "development")
DEBUG = ENV == "development"

# Logging settings
LOG_LEVEL = os.getenv("VEM_LOG_LEVEL", "INFO")
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
LOG_FILE = os.getenv("VEM_LOG_FILE")

# Configuration folders
CONFIG_DIR = BASE_DIR / "config"
CASES_CONFIG_DIR = Path(os.getenv("VEM_CASES_CONFIG_DIR", str(CONFIG_DIR / "cases")))

# Initialize settings file
initialize_settings_file()

# Output settings
OUTPUT_DIR = os.getenv("VEM_OUTPUT_DIR", get_output_dir())


def get_config() -> Dict[str, Any]:
    """
    Effective configuration: environment values plus the [solver] section
    of settings.ini as it reads right now.
    """
    return {
        "app_name": APP_NAME,
        "app_version": APP_VERSION,
        "app_description": APP_DESCRIPTION,
        "env": ENV,
        "debug": DEBUG,
        "solver": get_solver_settings(),
        "output": {
            "dir": OUTPUT_DIR,
        },
        "cases": {
            "config_dir": str(CASES_CONFIG_DIR),
        },
        "log": {
            "level": LOG_LEVEL,
            "format": LOG_FORMAT,
            "file": LOG_FILE,
        },
        "settings_file": str(SETTINGS_FILE),
    }


def get_settings(section: Optional[str] = None) -> Dict[str, Any]:
    """
    One section of ``get_config()`` (for example "solver" or "log"), or all of it.

    Raises:
        KeyError: For a section name the configuration does not have.
    """
    settings = get_config()
    if section is None:
        return settings
    try:
        return settings[section]
    except KeyError:
        raise KeyError(f"No configuration section named '{section}' (have: {', '.join(settings)})") from None
