"""Built-in benchmark cases, discovered by the case runner."""
