"""
Helper utilities.

Small functions shared by the case registry, the result writers and the CLI.
"""

import math
from datetime import datetime, timezone
from typing import Any, Dict, Optional


def format_datetime(dt: datetime) -> str:
    """
    Format a datetime object as an ISO 8601 string.

    Args:
        dt (datetime): The datetime object to format.

    Returns:
        str: The formatted datetime string.
    """
    return dt.isoformat()


def format_error(error: Exception) -> Dict[str, str]:
    """
    Format an exception into a standardized error dictionary.

    Args:
        error (Exception): The exception to format.

    Returns:
        Dict[str, str]: Formatted error dictionary.
    """
    return {
        "error": error.__class__.__name__,
        "message": str(error),
        "timestamp": format_datetime(datetime.now(timezone.utc)),
    }


def deep_merge(default: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    """
    Deep merge two dictionaries, with override values taking precedence.

    Args:
        default (Dict[str, Any]): Base values.
        override (Dict[str, Any]): Values that win on conflicts.

    Returns:
        Dict[str, Any]: Merged dictionary; neither input is modified.
    """
    result = dict(default)
    for key, value in override.items():
        if key in result and isinstance(result[key], dict) and isinstance(value, dict):
            result[key] = deep_merge(result[key], value)
        else:
            result[key] = value
    return result


def filter_none_values(data: Dict[str, Any]) -> Dict[str, Any]:
    """
    Remove None values from a dictionary.

    Args:
        data (Dict[str, Any]): The dictionary to filter.

    Returns:
        Dict[str, Any]: The filtered dictionary.
    """
    return {k: v for k, v in data.items() if v is not None}


def json_safe(value: Any) -> Any:
    """Convert floats that JSON cannot carry (nan, inf) into None, recursively."""
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [json_safe(v) for v in value]
    return value


def format_float(value: Optional[float]) -> str:
    """Render a float for CSV output with full round-trip precision."""
    if value is None:
        return ""
    return repr(float(value))
