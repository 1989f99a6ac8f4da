import math

import pytest

from vemsolver.core import settings_manager
from vemsolver.core.config import get_config, get_settings
from vemsolver.utils.helpers import deep_merge, filter_none_values, format_error, format_float, json_safe


def test_settings_file_is_created_with_defaults(tmp_path):
    path = tmp_path / "config" / "settings.ini"
    settings_manager.initialize_settings_file(path)
    assert path.exists()
    assert settings_manager.get_solver_settings(path) == settings_manager.DEFAULT_SETTINGS["solver"]
    assert settings_manager.get_output_dir(path) == "results"
    assert settings_manager.get_general_settings(path)["app_name"] == "vemsolver"


def test_solver_settings_are_typed(tmp_path):
    path = tmp_path / "settings.ini"
    path.write_text("[solver]\nrel_tol = 1e-4\nmax_steps = 50\n")
    settings = settings_manager.get_solver_settings(path)
    assert settings["rel_tol"] == 1e-4
    assert settings["max_steps"] == 50
    assert isinstance(settings["max_steps"], int)
    assert settings["abs_tol"] == 1e-8


def test_update_solver_settings(tmp_path):
    path = settings_manager.initialize_settings_file(tmp_path / "settings.ini")
    settings_manager.update_solver_settings({"tau_max": 25.0}, path)
    assert settings_manager.get_solver_settings(path)["tau_max"] == 25.0


def test_missing_file_falls_back_to_defaults(tmp_path):
    path = tmp_path / "absent.ini"
    assert settings_manager.get_solver_settings(path)["residual_tol"] == 1e-6
    assert settings_manager.get_general_settings(path)["env"] == "development"


def test_get_settings_sections():
    assert get_settings("solver")["max_steps"] > 0
    assert "log" in get_config()
    with pytest.raises(KeyError):
        get_settings("nosuch")


def test_helpers():
    merged = deep_merge({"a": {"b": 1, "c": 2}, "d": 1}, {"a": {"b": 5}})
    assert merged == {"a": {"b": 5, "c": 2}, "d": 1}
    assert filter_none_values({"a": None, "b": 0}) == {"b": 0}
    assert json_safe({"x": [math.nan, 1.0], "y": math.inf}) == {"x": [None, 1.0], "y": None}
    assert format_float(None) == ""
    assert float(format_float(0.1 + 0.2)) == 0.1 + 0.2
    error = format_error(ValueError("boom"))
    assert error["error"] == "ValueError" and error["message"] == "boom"
