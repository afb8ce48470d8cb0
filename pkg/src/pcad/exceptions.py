"""Exception types shared across the package.

The CLI maps these onto process exit codes: ConfigError -> 2,
DataError -> 3, NumericalError -> 4. Everything else is a plain
ValueError raised at the offending call site.
"""


class ConfigError(Exception):
    """Invalid or inconsistent run configuration."""


class DataError(Exception):
    """Dataset files or manifests that violate their schema."""


class NumericalError(Exception):
    """Non-finite values or degenerate norms where the pipeline cannot proceed."""


class DegenerateGeometryError(ValueError):
    """Geometry too degenerate to process (e.g. all points coincident)."""


class UndefinedMetricError(ValueError):
    """A metric requested on inputs where it has no defined value."""
